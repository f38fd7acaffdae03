#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "advobj/tensor.hpp"

namespace advobj {

// Raw tensor format: little-endian 64-bit reals, row-major, in `path`; a text
// sidecar at `path + ".shape"` holds the dimensions on line one and the element
// count on line two.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

// 8-bit binary PGM (1 channel) / PPM (3 channels), values mapped linearly
// between [0,1] and 0..255. Reading returns (C,H,W); writing accepts (H,W) or
// (C,H,W) with C in {1,3} and clamps to [0,1].
Tensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor& img);

// Min-max normalized grayscale dump for maps with arbitrary range (depth,
// saliency). Returns the (lo, hi) used so reports can record them.
std::pair<double, double> write_image_normalized(const std::filesystem::path& path,
                                                 const Tensor& map2d);

// Mask file: PGM where a pixel counts as inside iff its byte value >= 128.
// Returns an (H,W) tensor with entries exactly 0 or 1.
Tensor read_mask_tensor(const std::filesystem::path& path);
void write_mask_tensor(const std::filesystem::path& path, const Tensor& mask2d);

// Shortest decimal form that round-trips a double (17 significant digits);
// the only float formatting used in CSV and report files.
std::string fmt_g17(double v);

// One CSV file: header row then data rows, all cells preformatted strings.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace advobj
