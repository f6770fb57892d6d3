#include "train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "config.hpp"

namespace sgsln::train {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'L', 'N'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

template <class T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void write_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

template <class T>
T read_raw(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(in.gcount() == std::streamsize(sizeof(T)), "checkpoint: truncated file while reading ",
        what);
  return v;
}

std::string read_string(std::istream& in, const std::string& what) {
  const uint32_t len = read_raw<uint32_t>(in, what + " length");
  check(len <= (1u << 24), "checkpoint: implausible ", what, " length ", len);
  std::string s(len, '\0');
  in.read(s.data(), std::streamsize(len));
  check(in.gcount() == std::streamsize(len), "checkpoint: truncated file while reading ", what);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const model::Model& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), "checkpoint: cannot open '", path, "' for writing");
  write_bytes(out, kMagic, 4);
  write_raw(out, kVersion);
  const std::string echo = serialize_model_echo(m.config);
  write_raw(out, uint32_t(echo.size()));
  write_bytes(out, echo.data(), echo.size());
  write_raw(out, uint32_t(m.params.count()));
  for (const auto& name : m.params.names()) {
    const Tensor& t = m.params.at(name);
    write_raw(out, uint32_t(name.size()));
    write_bytes(out, name.data(), name.size());
    write_raw(out, uint32_t(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_raw(out, uint64_t(t.dim(i)));
    write_bytes(out, t.data().data(), t.numel() * sizeof(float));
  }
  out.flush();
  check(out.good(), "checkpoint: write to '", path, "' failed");
}

model::Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "checkpoint: cannot open '", path, "'");
  char magic[4];
  in.read(magic, 4);
  check(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
        "checkpoint: '", path, "' is not an SGLN checkpoint");
  const uint32_t version = read_raw<uint32_t>(in, "version");
  check(version == kVersion, "checkpoint: unsupported version ", version, " (expected ",
        kVersion, ")");
  const std::string echo = read_string(in, "config echo");
  model::Model m = model::build_model(parse_model_echo(echo));

  const uint32_t count = read_raw<uint32_t>(in, "tensor count");
  check(count == m.params.count(), "checkpoint: holds ", count, " tensors but the model expects ",
        m.params.count());

  // Stage everything first; nothing is applied if any record is bad.
  std::vector<std::pair<std::string, Tensor>> staged;
  staged.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, "tensor name");
    check(m.params.has(name), "checkpoint: unexpected tensor '", name, "'");
    const uint32_t rank = read_raw<uint32_t>(in, "rank of '" + name + "'");
    check(rank <= 8, "checkpoint: implausible rank ", rank, " for '", name, "'");
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = int(read_raw<uint64_t>(in, "extent of '" + name + "'"));
    }
    const Shape& expect = m.params.at(name).shape();
    check(shape == expect, "checkpoint: tensor '", name, "' has shape ", shape_str(shape),
          " but the model expects ", shape_str(expect));
    std::vector<float> payload(shape_numel(shape));
    in.read(reinterpret_cast<char*>(payload.data()),
            std::streamsize(payload.size() * sizeof(float)));
    check(in.gcount() == std::streamsize(payload.size() * sizeof(float)),
          "checkpoint: truncated payload for tensor '", name, "'");
    staged.emplace_back(name, Tensor(shape, std::move(payload)));
  }
  for (auto& [name, tensor] : staged) m.params.set(name, std::move(tensor));
  return m;
}

}  // namespace sgsln::train
