#pragma once

#include <string>

#include "gsm/graphscan.hpp"
#include "gsm/types.hpp"

namespace gsm {

// Deterministic grids for the field demo. Names: checker, gradient, impulse.
// Anything else is treated as a path to a JSON grid file.
TokenGrid pattern_grid(const std::string& name, Index height, Index width, Index channels);
TokenGrid load_grid_file(const std::string& path);

// displacement is L x 2 (dx, dy) in normalized coordinates.
std::string render_magnitude_pgm(const Matrix& displacement, Index height, Index width);
std::string render_direction_ppm(const Matrix& displacement, Index height, Index width);

// Polyline through the expected positions in raster order, start marked with
// a circle and end with a square.
std::string render_path_svg(const Matrix& positions, Index height, Index width);

void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace gsm
