// png_io.hpp
// On-disk image formats:
//   RGB images    8-bit RGB PNG, values scaled by 255
//   masks         8-bit gray PNG, foreground = 255
//   depth maps    16-bit gray PNG in tenth-millimeters (range 0 .. 6553.5 mm)
//   normal maps   16-bit RGB PNG mapping each component linearly from [-1, 1]
// Writers are deterministic: the same data produces identical bytes.

#pragma once

#include <filesystem>

#include "defsurf/types.hpp"

namespace defsurf {

void write_image_png(const std::filesystem::path& path, const Rgbf& image);
Rgbf read_image_png(const std::filesystem::path& path);

void write_mask_png(const std::filesystem::path& path, const MaskGrid& mask);
MaskGrid read_mask_png(const std::filesystem::path& path);

void write_depth_png(const std::filesystem::path& path, const Gridf& depth_mm);
Gridf read_depth_png(const std::filesystem::path& path);

void write_normals_png(const std::filesystem::path& path,
                       const NormalGridf& normals);
NormalGridf read_normals_png(const std::filesystem::path& path);

}  // namespace defsurf
