#include "kinefit/image_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace kinefit {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("pgm " + path.string() + ": " + what);
}

int read_token(std::istream& in, const std::filesystem::path& path) {
  // Skips whitespace and '#' comment lines between header fields.
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  if (!in) fail(path, "malformed header");
  return value;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Gray8& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<size_t>(image.width) * image.height)
    fail(path, "image size does not match pixel buffer");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) fail(path, "short write");
}

Gray8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string magic;
  in >> magic;
  if (magic != "P5") fail(path, "not a binary PGM (P5)");
  Gray8 image;
  image.width = read_token(in, path);
  image.height = read_token(in, path);
  const int maxval = read_token(in, path);
  if (image.width <= 0 || image.height <= 0) fail(path, "bad dimensions");
  if (maxval != 255) fail(path, "unsupported maxval " + std::to_string(maxval));
  in.get();  // single whitespace after maxval
  image.pixels.resize(static_cast<size_t>(image.width) * image.height);
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) fail(path, "short read");
  return image;
}

Gray8 quantize(const Tensor& image) {
  if (image.shape.size() != 2)
    throw std::invalid_argument("quantize: expects a 2-D image, got " + shape_str(image.shape));
  Gray8 out;
  out.height = image.shape[0];
  out.width = image.shape[1];
  out.pixels.resize(static_cast<size_t>(out.height) * out.width);
  const auto& v = image.values();
  for (size_t i = 0; i < out.pixels.size(); ++i) {
    double x = v[i];
    x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
    out.pixels[i] = static_cast<uint8_t>(std::lround(x * 255.0));
  }
  return out;
}

Tensor to_intensity(const Gray8& image) {
  std::vector<double> v(image.pixels.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = image.pixels[i] / 255.0;
  return Tensor::from({image.height, image.width}, std::move(v));
}

Gray8 mask_to_gray(const BinaryMask& mask) {
  Gray8 out;
  out.height = mask.height;
  out.width = mask.width;
  out.pixels.resize(mask.on.size());
  for (size_t i = 0; i < mask.on.size(); ++i) out.pixels[i] = mask.on[i] ? 255 : 0;
  return out;
}

BinaryMask gray_to_mask(const Gray8& image) {
  BinaryMask mask;
  mask.height = image.height;
  mask.width = image.width;
  mask.on.resize(image.pixels.size());
  for (size_t i = 0; i < image.pixels.size(); ++i) mask.on[i] = image.pixels[i] >= 128 ? 1 : 0;
  return mask;
}

}  // namespace kinefit
