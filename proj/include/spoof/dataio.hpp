#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spoof/tensor.hpp"

namespace spoof {

/// Malformed manifest, image, or other input file.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Label { Live, Printed, Contact };
enum class Subset { Train, Test };

std::string_view to_string(Label label) noexcept;
std::string_view to_string(Subset subset) noexcept;
Label parse_label(std::string_view text);
Subset parse_subset(std::string_view text);
inline bool is_attack(Label label) noexcept { return label != Label::Live; }

/// Pixel rectangle [x_min, x_max) x [y_min, y_max).
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const noexcept { return x_max - x_min; }
  int height() const noexcept { return y_max - y_min; }
  /// Non-empty and inside a width x height image.
  bool fits(std::size_t width, std::size_t height) const noexcept;
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct SampleRecord {
  std::string image_path;
  Label label = Label::Live;
  std::string dataset;
  Subset subset = Subset::Train;
  std::optional<BBox> bbox;
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct Manifest {
  std::vector<SampleRecord> records;
  std::filesystem::path source;

  /// Relative image paths resolve against the manifest's directory.
  std::filesystem::path resolve(const SampleRecord& record) const;
  std::vector<SampleRecord> subset(Subset which) const;
  /// Dataset names in order of first appearance.
  std::vector<std::string> datasets() const;
};

inline constexpr std::string_view kManifestHeader =
    "image_path,label,dataset,subset,x_min,y_min,x_max,y_max";

/// Parses the manifest CSV. With `strict`, every referenced image must exist
/// and every bbox must fit inside the image's PGM header extents.
Manifest load_manifest(const std::filesystem::path& path, bool strict = false);
Manifest parse_manifest(std::string_view text, const std::filesystem::path& source,
                        bool strict = false);
std::string format_manifest(const Manifest& manifest);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct PgmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t data_offset = 0;
};

/// Binary PGM (P5) with maxval 255 only.
PgmHeader parse_pgm_header(std::span<const std::uint8_t> bytes);
PgmHeader read_pgm_header(const std::filesystem::path& path);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Byte v maps to v / 255, shape [1,1,H,W].
Tensor<float> to_tensor(const GrayImage& image);
Tensor<float> load_gray_image(const std::filesystem::path& path);

/// Crops to `bbox` (whole image when absent) and resamples to target x target
/// with corner-aligned bilinear interpolation.
template <typename T>
Tensor<T> crop_resize(const Tensor<T>& image, const std::optional<BBox>& bbox, std::size_t target);

extern template Tensor<float> crop_resize(const Tensor<float>&, const std::optional<BBox>&,
                                          std::size_t);
extern template Tensor<double> crop_resize(const Tensor<double>&, const std::optional<BBox>&,
                                           std::size_t);

}  // namespace spoof
