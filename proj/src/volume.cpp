#include "lungcrowd/volume.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "lungcrowd/error.hpp"
#include "lungcrowd/log.hpp"

namespace lungcrowd {

namespace {

void validate_geometry(const Dims3& dims, const Spacing3& spacing) {
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
    fail(ErrorKind::invalid_argument, "volume dims must be >= 1");
  if (!(spacing.sx > 0) || !(spacing.sy > 0) || !(spacing.sz > 0))
    fail(ErrorKind::invalid_argument, "volume spacing must be > 0");
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream ss(line);
  return {std::istream_iterator<std::string>(ss), std::istream_iterator<std::string>()};
}

template <typename T>
T parse_number(const std::string& word, const std::string& context) {
  T value{};
  auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), value);
  if (ec != std::errc() || ptr != word.data() + word.size())
    fail(ErrorKind::format, "malformed header: bad number '" + word + "' in " + context);
  return value;
}

struct Header {
  Dims3 dims;
  Spacing3 spacing;
  std::size_t payload_offset = 0;
};

// Parses the three header lines and the terminating blank line.
Header parse_header(const std::string& data, const std::string& magic, const std::string& where) {
  Header header;
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) fail(ErrorKind::format, "malformed header: truncated in " + where);
    line = data.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = nl + 1;
  };
  std::string line;
  next_line(line);
  if (line != magic) fail(ErrorKind::format, "malformed header: expected '" + magic + "' in " + where);

  next_line(line);
  auto words = split_words(line);
  if (words.size() != 4 || words[0] != "dims")
    fail(ErrorKind::format, "malformed header: expected 'dims <nx> <ny> <nz>' in " + where);
  header.dims = {parse_number<int>(words[1], where), parse_number<int>(words[2], where),
                 parse_number<int>(words[3], where)};

  next_line(line);
  words = split_words(line);
  if (words.size() != 4 || words[0] != "spacing")
    fail(ErrorKind::format, "malformed header: expected 'spacing <sx> <sy> <sz>' in " + where);
  header.spacing = {parse_number<double>(words[1], where), parse_number<double>(words[2], where),
                    parse_number<double>(words[3], where)};

  next_line(line);
  if (!line.empty()) fail(ErrorKind::format, "malformed header: unexpected field '" + line + "' in " + where);

  if (header.dims.nx < 1 || header.dims.ny < 1 || header.dims.nz < 1)
    fail(ErrorKind::format, "non-positive dims in " + where);
  if (!(header.spacing.sx > 0) || !(header.spacing.sy > 0) || !(header.spacing.sz > 0))
    fail(ErrorKind::format, "non-positive spacing in " + where);
  header.payload_offset = pos;
  return header;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string header_text(const std::string& magic, const Dims3& dims, const Spacing3& spacing) {
  std::string text = magic + "\n";
  text += "dims " + std::to_string(dims.nx) + " " + std::to_string(dims.ny) + " " + std::to_string(dims.nz) + "\n";
  text += "spacing " + format_double(spacing.sx) + " " + format_double(spacing.sy) + " " +
          format_double(spacing.sz) + "\n\n";
  return text;
}

void write_all(const std::filesystem::path& path, const std::string& header, const char* payload,
               std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload, static_cast<std::streamsize>(size));
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace

CtVolume::CtVolume(Dims3 dims, Spacing3 spacing, std::vector<Hu> voxels)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  validate_geometry(dims_, spacing_);
  if (voxels_.size() != dims_.count())
    fail(ErrorKind::invalid_argument, "voxel count " + std::to_string(voxels_.size()) + " != nx*ny*nz " +
                                          std::to_string(dims_.count()));
  for (Hu v : voxels_) {
    if (v < kMinHu || v > kMaxHu)
      fail(ErrorKind::invalid_argument, "voxel value " + std::to_string(v) + " outside [-1024, 3071]");
  }
}

void DisplayWindow::validate() const {
  if (!(width > 0)) fail(ErrorKind::invalid_argument, "display window width must be > 0");
}

std::uint8_t window_to_gray(double hu, const DisplayWindow& window) {
  const double lower = window.level - window.width / 2.0;
  // Multiply before dividing so exact half-integers (e.g. 59.5) stay exact.
  const double scaled = 255.0 * (hu - lower) / window.width;
  const double clamped = std::clamp(scaled, 0.0, 255.0);
  return static_cast<std::uint8_t>(std::lround(clamped));
}

Image2D<Hu> axial_slice(const CtVolume& volume, int z) {
  const auto& d = volume.dims();
  if (z < 0 || z >= d.nz)
    fail(ErrorKind::invalid_argument, "slice index " + std::to_string(z) + " out of range [0, " +
                                          std::to_string(d.nz) + ")");
  Image2D<Hu> slice(d.nx, d.ny);
  const auto plane = volume.voxels().subspan(d.plane() * static_cast<std::size_t>(z), d.plane());
  std::copy(plane.begin(), plane.end(), slice.pixels.begin());
  return slice;
}

CtVolume load_volume(const std::filesystem::path& path) {
  const auto data = read_all(path);
  const auto header = parse_header(data, "CTVOL 1", path.string());
  const std::size_t expected = header.dims.count() * 2;
  const std::size_t actual = data.size() - header.payload_offset;
  if (actual != expected)
    fail(ErrorKind::format, "payload length mismatch in " + path.string() + ": got " + std::to_string(actual) +
                                " bytes, expected " + std::to_string(expected));

  std::vector<Hu> voxels(header.dims.count());
  std::size_t clamped = 0;
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data() + header.payload_offset);
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    const auto raw = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    auto value = static_cast<Hu>(raw);
    if (value < kMinHu || value > kMaxHu) {
      value = std::clamp<Hu>(value, kMinHu, kMaxHu);
      ++clamped;
    }
    voxels[i] = value;
  }
  if (clamped > 0)
    log::warn(path.string() + ": clamped " + std::to_string(clamped) + " samples to [-1024, 3071]");
  return CtVolume(header.dims, header.spacing, std::move(voxels));
}

void save_volume(const CtVolume& volume, const std::filesystem::path& path) {
  std::string payload;
  payload.resize(volume.voxels().size() * 2);
  std::size_t i = 0;
  for (Hu v : volume.voxels()) {
    const auto u = static_cast<std::uint16_t>(v);
    payload[i++] = static_cast<char>(u & 0xFF);
    payload[i++] = static_cast<char>(u >> 8);
  }
  write_all(path, header_text("CTVOL 1", volume.dims(), volume.spacing()), payload.data(), payload.size());
}

MaskFile load_mask(const std::filesystem::path& path) {
  const auto data = read_all(path);
  const auto header = parse_header(data, "MASK 1", path.string());
  const std::size_t expected = header.dims.count();
  if (data.size() - header.payload_offset != expected)
    fail(ErrorKind::format, "payload length mismatch in " + path.string() + ": expected " +
                                std::to_string(expected));
  MaskFile mask{header.dims, header.spacing, {}};
  mask.bits.assign(data.begin() + static_cast<std::ptrdiff_t>(header.payload_offset), data.end());
  for (auto& b : mask.bits) {
    if (b > 1) fail(ErrorKind::format, "mask byte outside {0,1} in " + path.string());
  }
  return mask;
}

void save_mask(const MaskFile& mask, const std::filesystem::path& path) {
  validate_geometry(mask.dims, mask.spacing);
  if (mask.bits.size() != mask.dims.count()) fail(ErrorKind::invalid_argument, "mask size mismatch");
  write_all(path, header_text("MASK 1", mask.dims, mask.spacing), reinterpret_cast<const char*>(mask.bits.data()),
            mask.bits.size());
}

}  // namespace lungcrowd
