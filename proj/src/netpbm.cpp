#include "ran/netpbm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ran {
namespace {

struct Header {
  Index width = 0;
  Index height = 0;
  std::size_t payload = 0;  // offset of the first pixel byte
};

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

Header parse_header(const std::vector<std::uint8_t>& bytes, const char* magic, const char* kind) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1])
    throw FormatError(std::string(kind) + ": missing " + magic + " magic", 0);
  std::size_t pos = 2;
  auto next_number = [&](const char* field) -> Index {
    while (pos < bytes.size()) {
      if (is_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size()) throw FormatError(std::string(kind) + ": header truncated before " + field, pos);
    if (bytes[pos] < '0' || bytes[pos] > '9')
      throw FormatError(std::string(kind) + ": expected digits for " + field, pos);
    Index v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (Index(1) << 24)) throw FormatError(std::string(kind) + ": " + field + " too large", pos);
      ++pos;
    }
    return v;
  };
  Header h;
  h.width = next_number("width");
  h.height = next_number("height");
  const std::size_t maxval_at = pos;
  const Index maxval = next_number("maxval");
  if (maxval != 255) throw FormatError(std::string(kind) + ": only maxval 255 is supported", maxval_at);
  if (pos >= bytes.size() || !is_space(bytes[pos]))
    throw FormatError(std::string(kind) + ": expected whitespace after maxval", pos);
  h.payload = pos + 1;
  if (h.width < 1 || h.height < 1) throw FormatError(std::string(kind) + ": empty image", maxval_at);
  return h;
}

std::vector<std::uint8_t> header_bytes(const char* magic, Index width, Index height) {
  const std::string s = std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  const Shape& s = image.shape;
  if (s.n != 1 || s.c != 3) throw ShapeError("write_ppm: expected a (1,3,H,W) image");
  auto bytes = header_bytes("P6", s.w, s.h);
  bytes.reserve(bytes.size() + static_cast<std::size_t>(3 * s.plane()));
  for (Index y = 0; y < s.h; ++y)
    for (Index x = 0; x < s.w; ++x)
      for (Index c = 0; c < 3; ++c) {
        const double v = std::clamp(image(0, c, y, x), 0.0, 1.0);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(255.0 * v)));
      }
  return bytes;
}

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes) {
  const Header h = parse_header(bytes, "P6", "ppm");
  const std::size_t need = static_cast<std::size_t>(3 * h.width * h.height);
  if (bytes.size() - h.payload < need) throw FormatError("ppm: truncated pixel data", bytes.size());
  if (bytes.size() - h.payload > need) throw FormatError("ppm: trailing bytes after pixel data", h.payload + need);
  Tensor image({1, 3, h.height, h.width});
  std::size_t pos = h.payload;
  for (Index y = 0; y < h.height; ++y)
    for (Index x = 0; x < h.width; ++x)
      for (Index c = 0; c < 3; ++c) image(0, c, y, x) = bytes[pos++] / 255.0;
  return image;
}

std::vector<std::uint8_t> encode_pgm(const LabelMap& labels) {
  if (labels.n != 1) throw ShapeError("write_pgm: expected a single label map");
  auto bytes = header_bytes("P5", labels.w, labels.h);
  bytes.insert(bytes.end(), labels.data.begin(), labels.data.end());
  return bytes;
}

LabelMap decode_pgm(const std::vector<std::uint8_t>& bytes) {
  const Header h = parse_header(bytes, "P5", "pgm");
  const std::size_t need = static_cast<std::size_t>(h.width * h.height);
  if (bytes.size() - h.payload < need) throw FormatError("pgm: truncated pixel data", bytes.size());
  if (bytes.size() - h.payload > need) throw FormatError("pgm: trailing bytes after pixel data", h.payload + need);
  LabelMap labels(1, h.height, h.width);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload), bytes.end(), labels.data.begin());
  return labels;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) { write_file(encode_ppm(image), path); }
Tensor read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }
void write_pgm(const LabelMap& labels, const std::filesystem::path& path) { write_file(encode_pgm(labels), path); }
LabelMap read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::string text;
  for (const auto& e : entries) {
    if (e.image.find_first_of("\t\n") != std::string::npos || e.labels.find_first_of("\t\n") != std::string::npos)
      throw Error("manifest paths may not contain tabs or newlines");
    text += e.image + '\t' + e.labels + '\n';
  }
  write_file({text.begin(), text.end()}, path);
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::vector<ManifestEntry> entries;
  std::size_t start = 0;
  while (start < bytes.size()) {
    std::size_t end = start;
    while (end < bytes.size() && bytes[end] != '\n') ++end;
    const std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                           bytes.begin() + static_cast<std::ptrdiff_t>(end));
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos || tab == 0 || tab + 1 == line.size())
      throw FormatError("manifest: expected 'image<TAB>labels'", start);
    entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    start = end + 1;
  }
  return entries;
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest) {
  const auto base = manifest.parent_path();
  std::vector<Sample> samples;
  for (const auto& e : read_manifest(manifest)) {
    Sample s{read_ppm(base / e.image), read_pgm(base / e.labels)};
    if (s.labels.h != s.image.shape.h || s.labels.w != s.image.shape.w)
      throw ShapeError("dataset: image and label sizes differ for " + e.image);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<ManifestEntry> write_samples(const std::vector<Sample>& samples, const std::filesystem::path& dir,
                                         const std::string& stem, const std::filesystem::path& relative_to) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%04zu", stem.c_str(), i);
    const auto image = dir / (std::string(name) + ".ppm");
    const auto labels = dir / (std::string(name) + ".pgm");
    write_ppm(samples[i].image, image);
    write_pgm(samples[i].labels, labels);
    entries.push_back({std::filesystem::relative(image, relative_to).generic_string(),
                       std::filesystem::relative(labels, relative_to).generic_string()});
  }
  return entries;
}

}  // namespace ran
