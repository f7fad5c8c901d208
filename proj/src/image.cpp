#include "synseg/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "synseg/errors.hpp"

namespace synseg {

ImageRGB make_image(int width, int height, float r, float g, float b) {
  ImageRGB img;
  img.width = width;
  img.height = height;
  img.rgb.resize(static_cast<size_t>(width) * height * 3);
  for (size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

LabelImage make_labels(int width, int height, uint8_t fill) {
  LabelImage img;
  img.width = width;
  img.height = height;
  img.labels.assign(static_cast<size_t>(width) * height, fill);
  return img;
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) throw InputError("image: truncated header in " + path);
  return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
  try {
    const int v = std::stoi(tok);
    if (v <= 0 || v > 1 << 16) throw InputError("image: bad dimension in " + path);
    return v;
  } catch (const InputError&) {
    throw;
  } catch (...) {
    throw InputError("image: malformed header token '" + tok + "' in " + path);
  }
}

}  // namespace

ImageRGB load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("image: cannot open " + path);
  if (next_token(in, path) != "P6") throw InputError("image: " + path + " is not binary PPM (P6)");
  const int w = parse_dim(next_token(in, path), path);
  const int h = parse_dim(next_token(in, path), path);
  const int maxval = parse_dim(next_token(in, path), path);
  if (maxval != 255) throw InputError("image: " + path + " maxval must be 255");
  // Exactly one whitespace byte separates header and raster.
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw InputError("image: truncated pixel data in " + path);
  ImageRGB img;
  img.width = w;
  img.height = h;
  img.rgb.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) img.rgb[i] = static_cast<float>(raw[i]) / 255.0f;
  return img;
}

void save_ppm(const ImageRGB& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("image: cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> raw(img.rgb.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const float v = std::clamp(img.rgb[i], 0.0f, 1.0f);
    raw[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw InputError("image: failed writing " + path);
}

LabelImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("image: cannot open " + path);
  if (next_token(in, path) != "P5") throw InputError("image: " + path + " is not binary PGM (P5)");
  const int w = parse_dim(next_token(in, path), path);
  const int h = parse_dim(next_token(in, path), path);
  const int maxval = parse_dim(next_token(in, path), path);
  if (maxval != 255) throw InputError("image: " + path + " maxval must be 255");
  LabelImage img;
  img.width = w;
  img.height = h;
  img.labels.resize(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(img.labels.data()), static_cast<std::streamsize>(img.labels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.labels.size()))
    throw InputError("image: truncated pixel data in " + path);
  return img;
}

void save_pgm(const LabelImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("image: cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.labels.data()),
            static_cast<std::streamsize>(img.labels.size()));
  if (!out) throw InputError("image: failed writing " + path);
}

std::vector<float> bilinear_resize(const std::vector<float>& in, int in_w, int in_h,
                                   int out_w, int out_h) {
  if (in_w <= 0 || in_h <= 0 || out_w <= 0 || out_h <= 0 ||
      static_cast<size_t>(in_w) * in_h != in.size())
    throw std::invalid_argument("bilinear_resize: bad dimensions");
  std::vector<float> out(static_cast<size_t>(out_w) * out_h);
  const double sx = static_cast<double>(in_w) / out_w;
  const double sy = static_cast<double>(in_h) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      const double v00 = in[static_cast<size_t>(y0) * in_w + x0];
      const double v01 = in[static_cast<size_t>(y0) * in_w + x1];
      const double v10 = in[static_cast<size_t>(y1) * in_w + x0];
      const double v11 = in[static_cast<size_t>(y1) * in_w + x1];
      const double top = v00 + (v01 - v00) * wx;
      const double bot = v10 + (v11 - v10) * wx;
      out[static_cast<size_t>(y) * out_w + x] = static_cast<float>(top + (bot - top) * wy);
    }
  }
  return out;
}

}  // namespace synseg
