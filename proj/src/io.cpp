#include "advobj/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "raw tensor files are little-endian; big-endian hosts unsupported");

namespace advobj {
namespace {

[[noreturn]] void io_fail(const std::filesystem::path& p, const std::string& msg) {
  throw std::runtime_error(p.string() + ": " + msg);
}

// PNM token reader: whitespace-separated, '#' starts a comment to end of line.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int pnm_int(std::istream& in, const std::filesystem::path& p) {
  std::string tok = pnm_token(in);
  if (tok.empty()) io_fail(p, "truncated header");
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    io_fail(p, "bad header token '" + tok + "'");
  }
}

std::vector<unsigned char> read_pnm_payload(const std::filesystem::path& p, int channels, int& h,
                                            int& w) {
  std::ifstream in(p, std::ios::binary);
  if (!in) io_fail(p, "cannot open");
  std::string magic = pnm_token(in);
  const char* want = channels == 1 ? "P5" : "P6";
  if (magic != want) io_fail(p, "expected " + std::string(want) + " magic, got '" + magic + "'");
  w = pnm_int(in, p);
  h = pnm_int(in, p);
  int maxval = pnm_int(in, p);
  if (w <= 0 || h <= 0) io_fail(p, "non-positive dimensions");
  if (maxval != 255) io_fail(p, "only maxval 255 supported, got " + std::to_string(maxval));
  // exactly one whitespace byte separates header and payload; pnm_int consumed it
  size_t count = static_cast<size_t>(h) * static_cast<size_t>(w) * static_cast<size_t>(channels);
  std::vector<unsigned char> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
  if (static_cast<size_t>(in.gcount()) != count) io_fail(p, "truncated pixel data");
  return buf;
}

void write_pnm(const std::filesystem::path& p, int channels, int h, int w,
               const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) io_fail(p, "cannot open for writing");
  out << (channels == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) io_fail(p, "write failed");
}

unsigned char to_byte(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail(path, "cannot open for writing");
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) io_fail(path, "write failed");
  }
  std::ostringstream side;
  for (size_t i = 0; i < t.shape.size(); ++i) side << (i ? " " : "") << t.shape[i];
  side << "\n" << t.numel() << "\n";
  write_text(path.string() + ".shape", side.str());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::istringstream side(read_text(path.string() + ".shape"));
  std::string dims_line, count_line;
  if (!std::getline(side, dims_line) || !std::getline(side, count_line))
    io_fail(path, "malformed shape sidecar");
  Shape shape;
  std::istringstream ds(dims_line);
  int d;
  while (ds >> d) shape.push_back(d);
  if (shape.empty()) io_fail(path, "empty shape sidecar");
  std::int64_t count = std::stoll(count_line);
  if (count != shape_numel(shape)) io_fail(path, "sidecar element count disagrees with shape");
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::vector<double> data(static_cast<size_t>(count));
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (static_cast<size_t>(in.gcount()) != data.size() * sizeof(double))
    io_fail(path, "truncated tensor data");
  return Tensor(shape, std::move(data));
}

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) io_fail(path, "cannot open");
  std::string magic = pnm_token(probe);
  probe.close();
  int channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    io_fail(path, "unsupported image magic '" + magic + "' (want P5 or P6)");
  int h = 0, w = 0;
  std::vector<unsigned char> bytes = read_pnm_payload(path, channels, h, w);
  Tensor img = Tensor::zeros({channels, h, w});
  // file layout interleaves channels; tensor layout is planar
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.data[(static_cast<size_t>(c) * h + y) * w + x] =
            bytes[(static_cast<size_t>(y) * w + x) * channels + c] / 255.0;
  return img;
}

void write_image(const std::filesystem::path& path, const Tensor& img) {
  Tensor t = img;
  if (t.shape.size() == 2) t = t.reshaped({1, t.shape[0], t.shape[1]});
  if (t.shape.size() != 3 || (t.shape[0] != 1 && t.shape[0] != 3))
    io_fail(path, "image must be (H,W) or (C,H,W) with C in {1,3}, got " + shape_str(img.shape));
  int c = t.shape[0], h = t.shape[1], w = t.shape[2];
  std::vector<unsigned char> bytes(static_cast<size_t>(c) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        bytes[(static_cast<size_t>(y) * w + x) * c + ch] =
            to_byte(t.data[(static_cast<size_t>(ch) * h + y) * w + x]);
  write_pnm(path, c, h, w, bytes);
}

std::pair<double, double> write_image_normalized(const std::filesystem::path& path,
                                                 const Tensor& map2d) {
  if (map2d.shape.size() != 2) io_fail(path, "normalized dump expects (H,W)");
  double lo = map2d.data[0], hi = map2d.data[0];
  for (double v : map2d.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double span = hi - lo;
  Tensor norm = map2d;
  for (double& v : norm.data) v = span > 0 ? (v - lo) / span : 0.0;
  write_image(path, norm);
  return {lo, hi};
}

Tensor read_mask_tensor(const std::filesystem::path& path) {
  int h = 0, w = 0;
  std::vector<unsigned char> bytes = read_pnm_payload(path, 1, h, w);
  Tensor m = Tensor::zeros({h, w});
  for (size_t i = 0; i < bytes.size(); ++i) m.data[i] = bytes[i] >= 128 ? 1.0 : 0.0;
  return m;
}

void write_mask_tensor(const std::filesystem::path& path, const Tensor& mask2d) {
  if (mask2d.shape.size() != 2) io_fail(path, "mask must be (H,W)");
  std::vector<unsigned char> bytes(mask2d.data.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask2d.data[i] != 0.0 ? 255 : 0;
  write_pnm(path, 1, mask2d.shape[0], mask2d.shape[1], bytes);
}

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size()) io_fail(path, "csv row width disagrees with header");
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  write_text(path, out.str());
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);  // binary: byte-stable across platforms
  if (!out) io_fail(path, "cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) io_fail(path, "write failed");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace advobj
