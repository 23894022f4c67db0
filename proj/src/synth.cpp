#include "spoof/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "spoof/fsutil.hpp"

namespace spoof {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

SynthStyle pseudo_dataset_style(std::size_t index) {
  SynthStyle s;
  switch (index % 4) {
    case 0:
      break;
    case 1:
      s.skin_level = 0.70;
      s.iris_level = 0.40;
      s.iris_radius_min = 70;
      s.iris_radius_max = 95;
      s.noise_sigma = 0.015;
      s.dot_period_min = 5;
      s.dot_period_max = 7;
      s.spokes_min = 30;
      s.spokes_max = 44;
      break;
    case 2:
      s.skin_level = 0.52;
      s.iris_level = 0.30;
      s.iris_radius_min = 90;
      s.iris_radius_max = 120;
      s.noise_sigma = 0.03;
      s.print_contrast = 0.5;
      s.dot_period_min = 3;
      s.dot_period_max = 5;
      s.spokes_min = 50;
      s.spokes_max = 70;
      break;
    case 3:
      s.skin_level = 0.66;
      s.iris_level = 0.33;
      s.iris_radius_min = 75;
      s.iris_radius_max = 105;
      s.noise_sigma = 0.025;
      s.print_contrast = 0.7;
      s.dot_depth = 0.22;
      s.spokes_min = 40;
      s.spokes_max = 56;
      s.lens_amplitude = 0.18;
      break;
  }
  return s;
}

std::size_t SynthCounts::of(Label label) const noexcept {
  switch (label) {
    case Label::Live: return live;
    case Label::Printed: return printed;
    case Label::Contact: return contact;
  }
  return 0;
}

BBox EyeGeometry::bbox(std::size_t width, std::size_t height) const {
  BBox b{static_cast<int>(std::floor(cx - iris_radius)), static_cast<int>(std::floor(cy - iris_radius)),
         static_cast<int>(std::ceil(cx + iris_radius)), static_cast<int>(std::ceil(cy + iris_radius))};
  b.x_min = std::max(b.x_min, 0);
  b.y_min = std::max(b.y_min, 0);
  b.x_max = std::min(b.x_max, static_cast<int>(width));
  b.y_max = std::min(b.y_max, static_cast<int>(height));
  return b;
}

RenderedEye render_eye(std::size_t width, std::size_t height, const SynthStyle& style,
                       std::mt19937_64& rng) {
  const double scale = static_cast<double>(height) / 480.0;
  RenderedEye eye{width, height, std::vector<float>(width * height), {}};
  auto& g = eye.geometry;
  g.iris_radius = scale * uniform(rng, style.iris_radius_min, style.iris_radius_max);
  g.pupil_radius = g.iris_radius * uniform(rng, 0.30, 0.45);
  const double jitter = scale * style.center_jitter;
  g.cx = width / 2.0 + uniform(rng, -jitter, jitter);
  g.cy = height / 2.0 + uniform(rng, -jitter, jitter);
  // Keep the iris disc inside the frame.
  g.cx = std::clamp(g.cx, g.iris_radius + 1, width - g.iris_radius - 1);
  g.cy = std::clamp(g.cy, g.iris_radius + 1, height - g.iris_radius - 1);

  const double skin = style.skin_level + uniform(rng, -0.03, 0.03);
  const double sclera = std::min(skin + 0.2, 0.92);
  const double iris_base = style.iris_level + uniform(rng, -style.iris_level_jitter, style.iris_level_jitter);
  const double pupil = 0.06;

  // Low-frequency shading across the frame.
  const double sf_x = uniform(rng, 0.5, 1.5) / width, sf_y = uniform(rng, 0.5, 1.5) / height;
  const double s_phase = uniform(rng, 0, kTwoPi);

  // Radial iris streaks: a few smooth angular harmonics.
  struct Harmonic {
    int m;
    double amp, phase, radial_freq, radial_phase;
  };
  std::vector<Harmonic> harmonics(5);
  for (auto& h : harmonics)
    h = {uniform_int(rng, 6, 18), uniform(rng, 0.02, 0.05), uniform(rng, 0, kTwoPi),
         uniform(rng, 1.0, 3.0), uniform(rng, 0, kTwoPi)};
  const double ring_period = g.iris_radius * uniform(rng, 0.12, 0.2);

  const double lid_a = 2.3 * g.iris_radius, lid_b = 1.25 * g.iris_radius;
  const double spec_x = g.cx + 0.3 * g.pupil_radius, spec_y = g.cy - 0.3 * g.pupil_radius;
  const double spec_r = 0.18 * g.pupil_radius;

  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = x - g.cx, dy = y - g.cy;
      const double r = std::hypot(dx, dy);
      double v = skin + 0.04 * std::sin(kTwoPi * (x * sf_x + y * sf_y) + s_phase);

      const double lid = std::hypot(dx / lid_a, dy / lid_b);
      v += (sclera - v) * (1.0 - smoothstep(0.97, 1.03, lid));

      if (r < g.iris_radius + 2) {
        const double theta = std::atan2(dy, dx);
        const double rn = (r - g.pupil_radius) / (g.iris_radius - g.pupil_radius);
        double iris = iris_base;
        for (const auto& h : harmonics)
          iris += h.amp * std::cos(h.m * theta + h.phase) *
                  (0.6 + 0.4 * std::sin(kTwoPi * h.radial_freq * rn + h.radial_phase));
        iris += 0.02 * std::cos(kTwoPi * r / ring_period);
        iris -= 0.08 * smoothstep(0.8, 1.0, rn);  // limbal darkening
        const double w_iris = 1.0 - smoothstep(g.iris_radius - 1.5, g.iris_radius + 1.5, r);
        v += (iris - v) * w_iris;
        const double w_pupil = 1.0 - smoothstep(g.pupil_radius - 1.5, g.pupil_radius + 1.5, r);
        v += (pupil - v) * w_pupil;
      }
      const double sr = std::hypot(x - spec_x, y - spec_y);
      v += (0.95 - v) * std::exp(-(sr * sr) / (2 * spec_r * spec_r));
      eye.pixels[y * width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return eye;
}

void apply_print(RenderedEye& eye, const SynthStyle& style, std::mt19937_64& rng) {
  double mean = 0;
  for (float v : eye.pixels) mean += v;
  mean /= static_cast<double>(eye.pixels.size());
  const double scale = static_cast<double>(eye.height) / 480.0;
  const double period =
      std::max(2.0, std::round(scale * uniform_int(rng, style.dot_period_min, style.dot_period_max)));
  const double radius = 0.35 * period;
  const double ox = uniform(rng, 0, period), oy = uniform(rng, 0, period);
  for (std::size_t y = 0; y < eye.height; ++y) {
    for (std::size_t x = 0; x < eye.width; ++x) {
      double v = mean + style.print_contrast * (eye.pixels[y * eye.width + x] - mean);
      const double fx = std::fmod(x + ox, period) - period / 2;
      const double fy = std::fmod(y + oy, period) - period / 2;
      if (fx * fx + fy * fy <= radius * radius) v *= 1.0 - style.dot_depth;
      eye.pixels[y * eye.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

void apply_lens(RenderedEye& eye, const SynthStyle& style, std::mt19937_64& rng) {
  const auto& g = eye.geometry;
  const int spokes = uniform_int(rng, style.spokes_min, style.spokes_max);
  const double phase = uniform(rng, 0, kTwoPi);
  const double inner = g.pupil_radius * 1.15, outer = g.iris_radius * 0.97;
  const int x0 = std::max(0, static_cast<int>(g.cx - outer) - 1);
  const int x1 = std::min(static_cast<int>(eye.width), static_cast<int>(g.cx + outer) + 2);
  const int y0 = std::max(0, static_cast<int>(g.cy - outer) - 1);
  const int y1 = std::min(static_cast<int>(eye.height), static_cast<int>(g.cy + outer) + 2);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double dx = x - g.cx, dy = y - g.cy;
      const double r = std::hypot(dx, dy);
      if (r < inner - 1 || r > outer + 1) continue;
      const double envelope = smoothstep(inner - 1, inner + 1, r) * (1.0 - smoothstep(outer - 1, outer + 1, r));
      const double theta = std::atan2(dy, dx);
      const double on = std::sin(spokes * theta + phase) > 0 ? 1.0 : 0.0;
      auto& px = eye.pixels[y * eye.width + x];
      px = static_cast<float>(std::clamp(px + style.lens_amplitude * on * envelope, 0.0, 1.0));
    }
  }
}

void add_sensor_noise(RenderedEye& eye, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0) return;
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& v : eye.pixels) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
}

GrayImage quantize(const RenderedEye& eye) {
  GrayImage img{eye.width, eye.height, std::vector<std::uint8_t>(eye.pixels.size())};
  for (std::size_t i = 0; i < eye.pixels.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(eye.pixels[i], 0.0f, 1.0f) * 255.0f));
  return img;
}

RenderedEye render_sample(Label label, std::size_t width, std::size_t height,
                          const SynthStyle& style, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto eye = render_eye(width, height, style, rng);
  if (label == Label::Printed) apply_print(eye, style, rng);
  if (label == Label::Contact) apply_lens(eye, style, rng);
  add_sensor_noise(eye, style.noise_sigma, rng);
  return eye;
}

std::string pseudo_dataset_name(std::size_t index, std::size_t count) {
  return count <= 1 ? std::string("synth") : "synth" + std::to_string(index);
}

Manifest synth_generate(const SynthConfig& config) {
  if (config.width < 16 || config.height < 16)
    throw std::invalid_argument("synth: image extents must be at least 16 pixels");
  if (config.datasets == 0) throw std::invalid_argument("synth: dataset count must be positive");
  Manifest all;
  all.source = config.out_dir / "manifest.csv";
  constexpr Label kLabels[] = {Label::Live, Label::Printed, Label::Contact};
  for (std::size_t d = 0; d < config.datasets; ++d) {
    const std::string name = pseudo_dataset_name(d, config.datasets);
    const SynthStyle style = pseudo_dataset_style(d);
    Manifest local;
    local.source = config.out_dir / name / "manifest.csv";
    for (Subset subset : {Subset::Train, Subset::Test}) {
      const SynthCounts& counts = subset == Subset::Train ? config.train : config.test;
      for (Label label : kLabels) {
        for (std::size_t i = 0; i < counts.of(label); ++i) {
          const std::uint64_t seed =
              splitmix(splitmix(splitmix(splitmix(config.seed) ^ d) ^ static_cast<std::uint64_t>(subset)) ^
                       (static_cast<std::uint64_t>(label) << 32 | i));
          const auto eye = render_sample(label, config.width, config.height, style, seed);
          char file[64];
          std::snprintf(file, sizeof file, "%s_%04zu.pgm", std::string(to_string(label)).c_str(), i);
          const fs::path rel = fs::path(std::string(to_string(subset))) / file;
          write_pgm(config.out_dir / name / rel, quantize(eye));

          SampleRecord rec{(fs::path(name) / rel).generic_string(), label, name, subset,
                           eye.geometry.bbox(config.width, config.height)};
          all.records.push_back(rec);
          rec.image_path = rel.generic_string();
          local.records.push_back(std::move(rec));
        }
      }
    }
    if (config.datasets > 1) write_manifest(local, local.source);
  }
  write_manifest(all, all.source);
  return all;
}

}  // namespace spoof
