#include "gsm/field_render.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gsm {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void check_displacement(const Matrix& displacement, Index height, Index width) {
  if (height <= 0 || width <= 0) throw ParameterError("image extents must be positive");
  if (displacement.rows() != height * width || displacement.cols() != 2)
    throw ShapeError("displacement is " +
                     shape_str(displacement.rows(), displacement.cols()) + ", expected " +
                     shape_str(height * width, 2));
}

Array1D magnitudes(const Matrix& displacement) {
  return displacement.rowwise().norm().array();
}

struct Rgb {
  unsigned char r, g, b;
};

// Hue from the angle, full saturation, value from the normalized magnitude.
Rgb hsv_pixel(double hue, double value) {
  const double h = hue * 6.0;
  const int sector = std::min(5, static_cast<int>(h));
  const double f = h - sector;
  const double q = value * (1.0 - f);
  const double t = value * f;
  double r = 0.0, g = 0.0, b = 0.0;
  switch (sector) {
    case 0: r = value, g = t; break;
    case 1: r = q, g = value; break;
    case 2: g = value, b = t; break;
    case 3: g = q, b = value; break;
    case 4: r = t, b = value; break;
    default: r = value, b = q; break;
  }
  auto byte = [](double x) { return static_cast<unsigned char>(std::lround(255.0 * x)); };
  return {byte(r), byte(g), byte(b)};
}

}  // namespace

TokenGrid pattern_grid(const std::string& name, Index height, Index width, Index channels) {
  if (name != "checker" && name != "gradient" && name != "impulse")
    return load_grid_file(name);
  TokenGrid grid(height, width, channels);
  if (name == "checker") {
    for (Index row = 0; row < height; ++row)
      for (Index col = 0; col < width; ++col)
        for (Index ch = 0; ch < channels; ++ch)
          grid.features(row * width + col, ch) = ((row + col + ch) % 2 == 0) ? 1.0 : -1.0;
  } else if (name == "gradient") {
    for (Index row = 1; row <= height; ++row)
      for (Index col = 1; col <= width; ++col)
        for (Index ch = 0; ch < channels; ++ch)
          grid.features((row - 1) * width + (col - 1), ch) =
              grid.norm_col(col) + 0.5 * grid.norm_row(row) + 0.1 * static_cast<double>(ch);
  } else {
    const Index center = ((height - 1) / 2) * width + (width - 1) / 2;
    grid.features.row(center).setOnes();
  }
  return grid;
}

TokenGrid load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open grid file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse grid file '" + path + "': " + e.what());
  }
  if (!doc.contains("height") || !doc.contains("width") || !doc.contains("channels") ||
      !doc.contains("data"))
    throw InputError("grid file '" + path + "' needs height, width, channels, data");
  const Index height = doc["height"].get<Index>();
  const Index width = doc["width"].get<Index>();
  const Index channels = doc["channels"].get<Index>();
  const auto& data = doc["data"];
  TokenGrid grid(height, width, channels);
  if (static_cast<Index>(data.size()) != height * width * channels)
    throw ShapeError("grid file '" + path + "' has " + std::to_string(data.size()) +
                     " values, expected " + std::to_string(height * width * channels));
  Index k = 0;
  for (Index i = 0; i < height * width; ++i)
    for (Index ch = 0; ch < channels; ++ch) grid.features(i, ch) = data[k++].get<double>();
  return grid;
}

std::string render_magnitude_pgm(const Matrix& displacement, Index height, Index width) {
  check_displacement(displacement, height, width);
  const Array1D mag = magnitudes(displacement);
  const double peak = mag.maxCoeff();
  std::ostringstream out;
  out << "P2\n" << width << " " << height << "\n255\n";
  for (Index row = 0; row < height; ++row) {
    for (Index col = 0; col < width; ++col) {
      const long pixel =
          peak > 0.0 ? std::lround(255.0 * mag(row * width + col) / peak) : 0;
      out << pixel << (col + 1 == width ? "" : " ");
    }
    out << "\n";
  }
  return out.str();
}

std::string render_direction_ppm(const Matrix& displacement, Index height, Index width) {
  check_displacement(displacement, height, width);
  const Array1D mag = magnitudes(displacement);
  const double peak = mag.maxCoeff();
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(3 * height * width));
  for (Index i = 0; i < height * width; ++i) {
    const double angle = std::atan2(displacement(i, 1), displacement(i, 0));
    const double hue = (angle + EIGEN_PI) / (2.0 * EIGEN_PI);
    const double value = peak > 0.0 ? mag(i) / peak : 0.0;
    const Rgb px = hsv_pixel(std::min(hue, 1.0 - 1e-12), value);
    out.push_back(static_cast<char>(px.r));
    out.push_back(static_cast<char>(px.g));
    out.push_back(static_cast<char>(px.b));
  }
  return out;
}

std::string render_path_svg(const Matrix& positions, Index height, Index width) {
  check_displacement(positions, height, width);
  constexpr double kSize = 512.0, kMargin = 32.0;
  auto to_px = [](double v) { return kMargin + (v + 1.0) * 0.5 * (kSize - 2.0 * kMargin); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"512\" height=\"512\" "
         "viewBox=\"0 0 512 512\">\n";
  out << "<rect width=\"512\" height=\"512\" fill=\"white\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#336699\" stroke-width=\"1.5\" points=\"";
  for (Index i = 0; i < positions.rows(); ++i) {
    if (i > 0) out << " ";
    out << format_double(to_px(positions(i, 0))) << "," << format_double(to_px(positions(i, 1)));
  }
  out << "\"/>\n";
  out << "<circle cx=\"" << format_double(to_px(positions(0, 0))) << "\" cy=\""
      << format_double(to_px(positions(0, 1))) << "\" r=\"6\" fill=\"#2a9d2a\"/>\n";
  const Index last = positions.rows() - 1;
  out << "<rect x=\"" << format_double(to_px(positions(last, 0)) - 5.0) << "\" y=\""
      << format_double(to_px(positions(last, 1)) - 5.0)
      << "\" width=\"10\" height=\"10\" fill=\"#cc3333\"/>\n";
  out << "</svg>\n";
  return out.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open '" + tmp + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.good()) throw InputError("failed writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace gsm
