#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ran/scene.hpp"

namespace ran {

// Binary netpbm: P6 (RGB, maxval 255) for images, P5 (grey, maxval 255) for
// label maps. Writers emit the header "P6\n<W> <H>\n255\n" (resp. "P5...").

std::vector<std::uint8_t> encode_ppm(const Tensor& image);
Tensor decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm(const LabelMap& labels);
LabelMap decode_pgm(const std::vector<std::uint8_t>& bytes);

void write_ppm(const Tensor& image, const std::filesystem::path& path);
Tensor read_ppm(const std::filesystem::path& path);
void write_pgm(const LabelMap& labels, const std::filesystem::path& path);
LabelMap read_pgm(const std::filesystem::path& path);

struct ManifestEntry {
  std::string image;
  std::string labels;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// One "image<TAB>labels" line per entry, LF-terminated.
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Loads every sample of a manifest in file order. Relative paths resolve
/// against the manifest's directory.
std::vector<Sample> load_dataset(const std::filesystem::path& manifest);

/// Writes samples as <dir>/<stem>_NNNN.{ppm,pgm} and returns their manifest entries
/// (paths relative to `relative_to`).
std::vector<ManifestEntry> write_samples(const std::vector<Sample>& samples, const std::filesystem::path& dir,
                                         const std::string& stem, const std::filesystem::path& relative_to);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path);

}  // namespace ran
