#include "rmtbvqa/tensor_io.hpp"

#include <array>
#include <bit>
#include <fstream>

#include "rmtbvqa/errors.hpp"

namespace rmtbvqa {

static_assert(std::endian::native == std::endian::little,
              "RMTT I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'R', 'M', 'T', 'T'};

void write_header(std::ostream& out, const Shape& shape, RmttDtype dtype) {
  if (shape.empty() || shape.size() > 255) throw ShapeError("RMTT: unsupported rank");
  out.write(kMagic.data(), kMagic.size());
  const std::uint8_t head[3] = {kRmttVersion, static_cast<std::uint8_t>(dtype),
                                static_cast<std::uint8_t>(shape.size())};
  out.write(reinterpret_cast<const char*>(head), 3);
  for (auto d : shape) {
    const std::uint64_t v = d;
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
}

template <class T>
void write_values(std::ostream& out, std::span<const T> data) {
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
}

void write_body(std::ostream& out, std::span<const double> data, RmttDtype dtype) {
  if (dtype == RmttDtype::f64) {
    write_values(out, data);
    return;
  }
  std::vector<float> narrow(data.begin(), data.end());
  write_values(out, std::span<const float>(narrow));
}

template <class T>
void read_values(std::istream& in, std::vector<Real>& out) {
  std::vector<T> buf(out.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(T)));
  if (!in) throw FormatError("RMTT: truncated data");
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<Real>(buf[i]);
}

RawArray read_raw(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("RMTT: bad magic");
  std::uint8_t head[3];
  in.read(reinterpret_cast<char*>(head), 3);
  if (!in) throw FormatError("RMTT: truncated header");
  if (head[0] != kRmttVersion) {
    throw FormatError("RMTT: unsupported version " + std::to_string(head[0]));
  }
  if (head[1] > static_cast<std::uint8_t>(RmttDtype::f64)) {
    throw FormatError("RMTT: unsupported dtype " + std::to_string(head[1]));
  }
  if (head[2] == 0) throw FormatError("RMTT: zero rank");
  RawArray r;
  r.shape.resize(head[2]);
  for (auto& d : r.shape) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw FormatError("RMTT: truncated dims");
    if (v == 0) throw FormatError("RMTT: zero dim");
    d = static_cast<std::size_t>(v);
  }
  r.data.resize(shape_numel(r.shape));
  if (head[1] == static_cast<std::uint8_t>(RmttDtype::f64)) {
    read_values<double>(in, r.data);
  } else {
    read_values<float>(in, r.data);
  }
  return r;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("RMTT: cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t, RmttDtype dtype) {
  write_header(out, t.shape(), dtype);
  write_body(out, t.data(), dtype);
  if (!out) throw Error("RMTT: write failed");
}

Tensor read_tensor(std::istream& in) {
  RawArray r = read_raw(in);
  return Tensor::from(std::move(r.shape), std::move(r.data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t, RmttDtype dtype) {
  save_raw(path, t.shape(), t.data(), dtype);
}

void save_raw(const std::filesystem::path& path, const Shape& shape, std::span<const float> data) {
  if (shape_numel(shape) != data.size()) throw ShapeError("RMTT: data/shape mismatch");
  auto out = open_out(path);
  write_header(out, shape, RmttDtype::f32);
  write_values(out, data);
  if (!out) throw Error("RMTT: write failed for " + path.string());
}

void save_raw(const std::filesystem::path& path, const Shape& shape, std::span<const double> data,
              RmttDtype dtype) {
  if (shape_numel(shape) != data.size()) throw ShapeError("RMTT: data/shape mismatch");
  auto out = open_out(path);
  write_header(out, shape, dtype);
  write_body(out, data, dtype);
  if (!out) throw Error("RMTT: write failed for " + path.string());
}

RawArray load_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("RMTT: cannot open " + path.string());
  try {
    return read_raw(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor load_tensor(const std::filesystem::path& path) {
  RawArray r = load_raw(path);
  return Tensor::from(std::move(r.shape), std::move(r.data));
}

}  // namespace rmtbvqa
