#include "spoof/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "spoof/fsutil.hpp"

namespace spoof {

namespace fs = std::filesystem;

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::Live: return "live";
    case Label::Printed: return "printed";
    case Label::Contact: return "contact";
  }
  return "?";
}

std::string_view to_string(Subset subset) noexcept {
  return subset == Subset::Train ? "train" : "test";
}

Label parse_label(std::string_view text) {
  if (text == "live") return Label::Live;
  if (text == "printed") return Label::Printed;
  if (text == "contact") return Label::Contact;
  throw DataError("unknown label '" + std::string(text) + "'");
}

Subset parse_subset(std::string_view text) {
  if (text == "train") return Subset::Train;
  if (text == "test") return Subset::Test;
  throw DataError("unknown subset '" + std::string(text) + "'");
}

bool BBox::fits(std::size_t width, std::size_t height) const noexcept {
  return x_min >= 0 && y_min >= 0 && x_min < x_max && y_min < y_max &&
         static_cast<std::size_t>(x_max) <= width && static_cast<std::size_t>(y_max) <= height;
}

fs::path Manifest::resolve(const SampleRecord& record) const {
  fs::path p(record.image_path);
  if (p.is_absolute() || source.empty()) return p;
  return source.parent_path() / p;
}

std::vector<SampleRecord> Manifest::subset(Subset which) const {
  std::vector<SampleRecord> out;
  for (const auto& r : records)
    if (r.subset == which) out.push_back(r);
  return out;
}

std::vector<std::string> Manifest::datasets() const {
  std::vector<std::string> names;
  for (const auto& r : records)
    if (std::find(names.begin(), names.end(), r.dataset) == names.end()) names.push_back(r.dataset);
  return names;
}

// ---- manifest CSV ---------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int parse_int(std::string_view s, const char* what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw DataError(std::string("bad integer for ") + what + ": '" + std::string(s) + "'");
  return v;
}

constexpr std::string_view kShortHeader = "image_path,label,dataset,subset";

}  // namespace

Manifest parse_manifest(std::string_view text, const fs::path& source, bool strict) {
  Manifest m;
  m.source = source;
  std::set<std::string> seen;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;

    auto fail = [&](const std::string& msg) -> DataError {
      return DataError("manifest " + source.string() + ":" + std::to_string(line_no) + ": " + msg);
    };

    if (!header_seen) {
      std::string compact;
      for (auto f : split_commas(line)) {
        if (!compact.empty()) compact += ',';
        compact += f;
      }
      if (compact != kManifestHeader && compact != kShortHeader)
        throw fail("expected header '" + std::string(kManifestHeader) + "'");
      header_seen = true;
      continue;
    }

    const auto fields = split_commas(line);
    if (fields.size() != 4 && fields.size() != 8)
      throw fail("expected 4 or 8 columns, found " + std::to_string(fields.size()));
    SampleRecord rec;
    try {
      rec.image_path = std::string(fields[0]);
      if (rec.image_path.empty()) throw DataError("empty image_path");
      rec.label = parse_label(fields[1]);
      rec.dataset = std::string(fields[2]);
      if (rec.dataset.empty()) throw DataError("empty dataset name");
      rec.subset = parse_subset(fields[3]);
      if (fields.size() == 8) {
        const bool all_empty = std::all_of(fields.begin() + 4, fields.end(),
                                           [](std::string_view f) { return f.empty(); });
        if (!all_empty) {
          BBox b{parse_int(fields[4], "x_min"), parse_int(fields[5], "y_min"),
                 parse_int(fields[6], "x_max"), parse_int(fields[7], "y_max")};
          if (b.x_min < 0 || b.y_min < 0 || b.x_min >= b.x_max || b.y_min >= b.y_max)
            throw DataError("bbox must satisfy 0 <= x_min < x_max and 0 <= y_min < y_max");
          rec.bbox = b;
        }
      }
    } catch (const DataError& e) {
      throw fail(e.what());
    }
    if (!seen.insert(rec.image_path).second) throw fail("duplicate image_path " + rec.image_path);

    if (strict) {
      const auto path = m.resolve(rec);
      if (!fs::exists(path)) throw fail("image not found: " + path.string());
      if (rec.bbox) {
        PgmHeader h;
        try {
          h = read_pgm_header(path);
        } catch (const DataError& e) {
          throw fail(e.what());
        }
        if (!rec.bbox->fits(h.width, h.height))
          throw fail("bbox exceeds image extent " + std::to_string(h.width) + "x" +
                     std::to_string(h.height));
      }
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

Manifest load_manifest(const fs::path& path, bool strict) {
  if (!fs::exists(path)) throw DataError("manifest not found: " + path.string());
  return parse_manifest(read_file_text(path), path, strict);
}

std::string format_manifest(const Manifest& manifest) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  for (const auto& r : manifest.records) {
    os << r.image_path << ',' << to_string(r.label) << ',' << r.dataset << ',' << to_string(r.subset);
    if (r.bbox)
      os << ',' << r.bbox->x_min << ',' << r.bbox->y_min << ',' << r.bbox->x_max << ','
         << r.bbox->y_max;
    else
      os << ",,,,";
    os << '\n';
  }
  return os.str();
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  write_file_atomic(path, format_manifest(manifest));
}

// ---- PGM ------------------------------------------------------------------

PgmHeader parse_pgm_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw DataError("pgm: bad magic (expected P5)");
  std::size_t pos = 2;
  auto is_space = [](std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  };
  auto read_number = [&](const char* what) -> std::size_t {
    // Whitespace and '#' comments may precede each header field.
    while (pos < bytes.size()) {
      if (is_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size()) throw DataError(std::string("pgm: truncated header before ") + what);
    std::size_t value = 0, digits = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      if (++digits > 9) throw DataError(std::string("pgm: ") + what + " too large");
      value = value * 10 + (bytes[pos] - '0');
      ++pos;
    }
    if (digits == 0) throw DataError(std::string("pgm: malformed ") + what);
    return value;
  };
  PgmHeader h;
  h.width = read_number("width");
  h.height = read_number("height");
  const std::size_t maxval = read_number("maxval");
  if (h.width == 0 || h.height == 0) throw DataError("pgm: zero image extent");
  if (maxval != 255) throw DataError("pgm: maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !is_space(bytes[pos]))
    throw DataError("pgm: missing whitespace after maxval");
  h.data_offset = pos + 1;
  return h;
}

PgmHeader read_pgm_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::vector<std::uint8_t> head(512);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_pgm_header(head);
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  const auto h = parse_pgm_header(bytes);
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.data_offset < n)
    throw DataError("pgm: truncated payload (" + std::to_string(bytes.size() - h.data_offset) +
                    " of " + std::to_string(n) + " bytes)");
  GrayImage img{h.width, h.height, {}};
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height)
    throw DataError("pgm: pixel buffer does not match extents");
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage read_pgm(const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const std::runtime_error&) {
    throw DataError("cannot open image " + path.string());
  }
  try {
    return decode_pgm(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_pgm(const fs::path& path, const GrayImage& image) {
  write_file_atomic(path, encode_pgm(image));
}

Tensor<float> to_tensor(const GrayImage& image) {
  Tensor<float> t({1, 1, image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    t[i] = static_cast<float>(image.pixels[i] / 255.0);
  return t;
}

Tensor<float> load_gray_image(const fs::path& path) { return to_tensor(read_pgm(path)); }

// ---- geometry -------------------------------------------------------------

template <typename T>
Tensor<T> crop_resize(const Tensor<T>& image, const std::optional<BBox>& bbox, std::size_t target) {
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 1)
    throw ShapeError("crop_resize: expected a [1,1,H,W] grayscale image, got " +
                     to_string(image.shape()));
  if (target == 0) throw ShapeError("crop_resize: target size must be positive");
  const std::size_t H = image.dim(2), W = image.dim(3);
  BBox box = bbox.value_or(BBox{0, 0, static_cast<int>(W), static_cast<int>(H)});
  if (box.width() <= 0 || box.height() <= 0)
    throw DataError("crop_resize: degenerate bbox");
  if (!box.fits(W, H))
    throw DataError("crop_resize: bbox outside " + std::to_string(W) + "x" + std::to_string(H) +
                    " image");

  // Corner-aligned sampling: output index 0 and target-1 land exactly on the
  // first and last crop pixels.
  auto source_coords = [target](int origin, int extent) {
    std::vector<std::pair<std::size_t, double>> coords(target);
    for (std::size_t u = 0; u < target; ++u) {
      const double s = target == 1 ? (extent - 1) / 2.0
                                   : static_cast<double>(u) * (extent - 1) /
                                         static_cast<double>(target - 1);
      const double base = std::floor(s);
      coords[u] = {static_cast<std::size_t>(origin + static_cast<int>(base)), s - base};
    }
    return coords;
  };
  const auto xs = source_coords(box.x_min, box.width());
  const auto ys = source_coords(box.y_min, box.height());
  const std::size_t x_last = static_cast<std::size_t>(box.x_max - 1);
  const std::size_t y_last = static_cast<std::size_t>(box.y_max - 1);

  Tensor<T> out({1, 1, target, target});
  const T* src = image.raw();
  for (std::size_t v = 0; v < target; ++v) {
    const auto [y0, fy] = ys[v];
    const std::size_t y1 = std::min(y0 + 1, y_last);
    for (std::size_t u = 0; u < target; ++u) {
      const auto [x0, fx] = xs[u];
      const std::size_t x1 = std::min(x0 + 1, x_last);
      const double a = src[y0 * W + x0], b = src[y0 * W + x1];
      const double c = src[y1 * W + x0], d = src[y1 * W + x1];
      const double top = a + fx * (b - a);
      const double bottom = c + fx * (d - c);
      out[v * target + u] = static_cast<T>(top + fy * (bottom - top));
    }
  }
  return out;
}

template Tensor<float> crop_resize(const Tensor<float>&, const std::optional<BBox>&, std::size_t);
template Tensor<double> crop_resize(const Tensor<double>&, const std::optional<BBox>&,
                                    std::size_t);

}  // namespace spoof
