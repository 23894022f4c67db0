#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "spoof/dataio.hpp"

namespace spoof {

/// Generator knobs. Lengths are in pixels of a 480-row frame and scale with
/// the requested image height.
struct SynthStyle {
  double skin_level = 0.62;
  double iris_level = 0.36;
  double iris_level_jitter = 0.04;
  double iris_radius_min = 80.0;
  double iris_radius_max = 110.0;
  double center_jitter = 40.0;
  double noise_sigma = 0.02;
  // printed attacks
  double print_contrast = 0.6;
  int dot_period_min = 4;
  int dot_period_max = 6;
  double dot_depth = 0.3;
  // textured contact lenses
  int spokes_min = 36;
  int spokes_max = 60;
  double lens_amplitude = 0.25;
};

/// Style of the index-th pseudo-dataset; index 0 is the default style and
/// the others deliberately shift brightness, geometry, and attack texture.
SynthStyle pseudo_dataset_style(std::size_t index);

struct SynthCounts {
  std::size_t live = 0;
  std::size_t printed = 0;
  std::size_t contact = 0;
  std::size_t total() const noexcept { return live + printed + contact; }
  std::size_t of(Label label) const noexcept;
};

struct SynthConfig {
  std::filesystem::path out_dir;
  SynthCounts train;
  SynthCounts test;
  std::size_t width = 640;
  std::size_t height = 480;
  std::uint64_t seed = 1;
  std::size_t datasets = 1;  // >1 generates parameter-varied pseudo-datasets
};

struct EyeGeometry {
  double cx = 0, cy = 0;
  double iris_radius = 0;
  double pupil_radius = 0;
  /// Bounding square of the iris disc, clipped to the frame.
  BBox bbox(std::size_t width, std::size_t height) const;
};

/// Float image in [0,1] before quantization.
struct RenderedEye {
  std::size_t width = 0, height = 0;
  std::vector<float> pixels;
  EyeGeometry geometry;
};

/// Noise-free live eye.
RenderedEye render_eye(std::size_t width, std::size_t height, const SynthStyle& style,
                       std::mt19937_64& rng);
/// Contrast compression plus a halftone dot grid over the whole frame.
void apply_print(RenderedEye& eye, const SynthStyle& style, std::mt19937_64& rng);
/// High-frequency angular pattern confined to the iris annulus.
void apply_lens(RenderedEye& eye, const SynthStyle& style, std::mt19937_64& rng);
void add_sensor_noise(RenderedEye& eye, double sigma, std::mt19937_64& rng);
GrayImage quantize(const RenderedEye& eye);

/// Fully rendered sample of one class, as written by synth_generate.
RenderedEye render_sample(Label label, std::size_t width, std::size_t height,
                          const SynthStyle& style, std::uint64_t seed);

/// Writes PGM images plus manifest.csv under out_dir and returns the
/// manifest. With datasets > 1 each pseudo-dataset also gets
/// <name>/manifest.csv.
Manifest synth_generate(const SynthConfig& config);

std::string pseudo_dataset_name(std::size_t index, std::size_t count);

}  // namespace spoof
