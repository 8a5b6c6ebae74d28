#pragma once

#include <string>

#include "chl/image.hpp"

namespace chl {

// Decodes any libpng-readable PNG into 8-bit RGB (palette/gray/alpha are
// expanded or stripped). Throws DataError on unreadable files.
ImageTensor read_png(const std::string& path);

// Rounds to 8-bit and writes an RGB PNG.
void write_png(const std::string& path, const ImageTensor& image);

}  // namespace chl
