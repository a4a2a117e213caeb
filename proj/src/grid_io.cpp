#include "htomo/grid_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace htomo {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size())
      throw FormatError(FormatErrc::truncated, "payload ends at byte " + std::to_string(bytes_.size()));
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

constexpr std::uint8_t magic[4] = {0x48, 0x54, 0x47, 0x44};

// Largest payload accepted (values), guards against hostile headers.
constexpr std::uint64_t max_values = std::uint64_t{1} << 32;

}  // namespace

std::vector<std::uint8_t> encode_grid(const ScalarGrid& grid) {
  const GridSpec& spec = grid.spec();
  std::vector<std::uint8_t> out(magic, magic + 4);
  out.reserve(6 + spec.ndim * 12 + 8 + grid.size() * 8);
  out.push_back(htgd_version);
  out.push_back(static_cast<std::uint8_t>(spec.ndim));
  for (int a = 0; a < spec.ndim; ++a) {
    if (spec.dims[a] > std::numeric_limits<std::uint32_t>::max())
      throw FormatError(FormatErrc::dim_overflow, "dimension does not fit in 32 bits");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.dims[a]));
  }
  for (int a = 0; a < spec.ndim; ++a) put<double>(out, spec.origin[a]);
  put<double>(out, spec.spacing);
  for (double v : grid.values()) put<double>(out, v);
  return out;
}

ScalarGrid decode_grid(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || !std::equal(magic, magic + 4, bytes.begin()))
    throw FormatError(FormatErrc::bad_magic, "not an HTGD grid");
  Reader r(bytes);
  for (int i = 0; i < 4; ++i) r.get<std::uint8_t>();
  const auto version = r.get<std::uint8_t>();
  if (version != htgd_version)
    throw FormatError(FormatErrc::unsupported_version, "version " + std::to_string(version));
  const auto ndim = r.get<std::uint8_t>();
  if (ndim < 1 || ndim > 3) throw FormatError(FormatErrc::bad_ndim, "ndim " + std::to_string(ndim));
  GridSpec spec;
  spec.ndim = ndim;
  std::uint64_t count = 1;
  for (int a = 0; a < ndim; ++a) {
    const auto d = r.get<std::uint32_t>();
    if (d < 2) throw FormatError(FormatErrc::invalid_value, "axis with fewer than 2 samples");
    count *= d;
    if (count > max_values) throw FormatError(FormatErrc::dim_overflow, "grid too large");
    spec.dims[a] = d;
  }
  for (int a = 0; a < ndim; ++a) spec.origin[a] = r.get<double>();
  spec.spacing = r.get<double>();
  if (!(spec.spacing > 0.0) || !std::isfinite(spec.spacing))
    throw FormatError(FormatErrc::invalid_value, "spacing must be positive");
  for (int a = 0; a < ndim; ++a)
    if (!std::isfinite(spec.origin[a])) throw FormatError(FormatErrc::invalid_value, "bad origin");
  if (r.remaining() < count * 8)
    throw FormatError(FormatErrc::truncated, "expected " + std::to_string(count) + " values");
  std::vector<double> values(count);
  for (auto& v : values) {
    v = r.get<double>();
    if (!std::isfinite(v)) throw FormatError(FormatErrc::invalid_value, "non-finite value");
  }
  if (r.remaining() != 0) throw FormatError(FormatErrc::invalid_value, "trailing bytes");
  return ScalarGrid(spec, std::move(values));
}

void write_grid(const std::filesystem::path& path, const ScalarGrid& grid) {
  const auto bytes = encode_grid(grid);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatErrc::io_failure, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::io_failure, "write failed: " + path.string());
}

ScalarGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io_failure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_grid(bytes);
}

void write_pgm(const std::filesystem::path& path, const ScalarGrid& image) {
  if (image.ndim() != 2) throw InvalidArgument("graymap export needs a 2D grid");
  const auto& spec = image.spec();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : image.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatErrc::io_failure, "cannot open " + path.string());
  // Row index is axis 1 (y, top row = largest y), column index is axis 0 (x).
  out << "P5\n" << spec.dims[0] << ' ' << spec.dims[1] << "\n255\n";
  for (std::size_t row = 0; row < spec.dims[1]; ++row) {
    const std::size_t j = spec.dims[1] - 1 - row;
    for (std::size_t i = 0; i < spec.dims[0]; ++i) {
      const double v = (image.at(i, j) - lo) * scale;
      out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)))));
    }
  }
  if (!out) throw FormatError(FormatErrc::io_failure, "write failed: " + path.string());
}

}  // namespace htomo
