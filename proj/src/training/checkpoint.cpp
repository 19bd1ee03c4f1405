#include "dnmt/training/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dnmt/error.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

namespace dnmt::training {
namespace {

constexpr char kMagic[4] = {'D', 'N', 'M', 'T'};

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end, std::string origin)
      : bytes_(bytes), end_(end), origin_(std::move(origin)) {}

  template <typename U>
  U get(const char* what) {
    U v;
    std::memcpy(&v, take(sizeof(U), what), sizeof(U));
    return v;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (n > end_ - pos_) {
      throw Error(origin_ + ": checkpoint truncated while reading " + what);
    }
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}

}  // namespace

const StoredTensor* CheckpointFile::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string text = file.config.format();
  w.put<std::uint64_t>(text.size());
  w.put_bytes(text.data(), text.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (auto dim : t.shape) w.put<std::uint64_t>(dim);
    std::visit([&](const auto& v) { w.put_bytes(v.data(), v.size() * sizeof(v[0])); }, t.values);
  }
  w.put<std::uint32_t>(crc32_of(w.bytes.data(), w.bytes.size()));

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw Error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::string origin = path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(origin + ": not a checkpoint (bad magic bytes)");
  }
  if (bytes.size() < 12) throw Error(origin + ": checkpoint truncated");
  const std::size_t body = bytes.size() - 4;

  Reader r(bytes, body, origin);
  r.take(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw Error(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body, 4);
  if (stored_crc != crc32_of(bytes.data(), body)) {
    throw Error(origin + ": checkpoint checksum mismatch (truncated or corrupted file)");
  }

  CheckpointFile file;
  const auto text_len = r.get<std::uint64_t>("config length");
  if (text_len > r.remaining()) throw Error(origin + ": checkpoint truncated in config text");
  const auto* text = r.take(text_len, "config text");
  file.config = util::KeyValues::parse(
      std::string(reinterpret_cast<const char*>(text), text_len), origin);

  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    const auto* name = r.take(name_len, "tensor name");
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto dtype = r.get<std::uint8_t>("dtype");
    const auto rank = r.get<std::uint8_t>("rank");
    for (std::uint8_t d = 0; d < rank; ++d) {
      t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("dims")));
    }
    const std::size_t n = numerics::numel(t.shape);
    auto fill = [&](auto& vec) {
      using U = typename std::decay_t<decltype(vec)>::value_type;
      if (n > r.remaining() / sizeof(U)) {
        throw Error(origin + ": checkpoint truncated in tensor " + t.name);
      }
      vec.resize(n);
      std::memcpy(vec.data(), r.take(n * sizeof(U), "tensor data"), n * sizeof(U));
    };
    if (dtype == static_cast<std::uint8_t>(DType::kFloat32)) {
      std::vector<float> v;
      fill(v);
      t.values = std::move(v);
    } else if (dtype == static_cast<std::uint8_t>(DType::kFloat64)) {
      std::vector<double> v;
      fill(v);
      t.values = std::move(v);
    } else {
      throw Error(origin + ": unknown dtype tag " + std::to_string(dtype) + " for tensor " +
                  t.name);
    }
    file.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw Error(origin + ": trailing bytes after tensor table");
  return file;
}

template <typename T>
StoredTensor store_tensor(const std::string& name, const numerics::Shape& shape,
                          std::span<const T> data) {
  StoredTensor t;
  t.name = name;
  t.shape = shape;
  t.values = std::vector<T>(data.begin(), data.end());
  return t;
}

template <typename T>
void restore_parameters(numerics::ParamStore<T>& params, const CheckpointFile& file) {
  for (const auto& [name, tensor] : params.all()) {
    const auto* stored = file.find(name);
    if (stored == nullptr) throw ShapeError("checkpoint has no parameter " + name);
    if (stored->shape != tensor.shape()) {
      throw ShapeError("parameter " + name + ": checkpoint shape " +
                       numerics::shape_string(stored->shape) + " but model expects " +
                       numerics::shape_string(tensor.shape()));
    }
    const auto* values = std::get_if<std::vector<T>>(&stored->values);
    if (values == nullptr) throw ShapeError("parameter " + name + ": checkpoint dtype differs");
    auto t = tensor;
    std::copy(values->begin(), values->end(), t.mutable_data().begin());
  }
}

template StoredTensor store_tensor<float>(const std::string&, const numerics::Shape&,
                                          std::span<const float>);
template StoredTensor store_tensor<double>(const std::string&, const numerics::Shape&,
                                           std::span<const double>);
template void restore_parameters(numerics::ParamStore<float>&, const CheckpointFile&);
template void restore_parameters(numerics::ParamStore<double>&, const CheckpointFile&);

}  // namespace dnmt::training
