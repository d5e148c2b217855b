#include "prodigy/container.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "prodigy/error.hpp"

namespace prodigy {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  std::uint64_t u64() { return uint(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::string_view bytes(std::uint64_t n) {
    need(n);
    std::string_view s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) throw LoadError(what_ + ": truncated file");
  }
  std::uint64_t uint(int width) {
    need(static_cast<std::uint64_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json Container::put(const Matrix& m) {
  nlohmann::json ref = {{"offset", values.size()}, {"rows", m.rows()}, {"cols", m.cols()}};
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) values.push_back(m(i, j));
  return ref;
}

Matrix Container::get(const nlohmann::json& ref) const {
  const auto offset = ref.at("offset").get<std::size_t>();
  const auto rows = ref.at("rows").get<Eigen::Index>();
  const auto cols = ref.at("cols").get<Eigen::Index>();
  if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) > values.size())
    throw LoadError("matrix reference out of bounds");
  Matrix m(rows, cols);
  std::size_t k = offset;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[k++];
  return m;
}

void write_container(const std::filesystem::path& path, std::string_view magic, std::uint32_t version,
                     const Container& c, bool checksum) {
  if (magic.size() != 8) throw UsageError("container magic must be 8 bytes");
  std::string out(magic);
  put_u32(out, version);
  const std::string header = c.header.dump();
  put_u64(out, header.size());
  out += header;
  put_u64(out, c.values.size());
  for (double v : c.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (checksum) put_u64(out, fnv1a64(out));

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Container read_container(const std::filesystem::path& path, std::string_view magic,
                         std::uint32_t version, bool checksum) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string what = path.string();
  Reader r(buf, what);
  if (r.bytes(magic.size()) != magic) throw LoadError(what + ": bad magic");
  const auto ver = r.u32();
  if (ver != version)
    throw LoadError(what + ": version " + std::to_string(ver) + " unsupported (expected " +
                    std::to_string(version) + ")");
  Container c;
  const auto header_len = r.u64();
  const auto header = r.bytes(header_len);
  const auto count = r.u64();
  if (count > r.remaining() / 8) throw LoadError(what + ": truncated file");
  c.values.resize(count);
  for (auto& v : c.values) v = std::bit_cast<double>(r.u64());
  if (checksum) {
    const std::size_t body = r.pos();
    const auto stored = r.u64();
    if (stored != fnv1a64(std::string_view(buf.data(), body))) throw LoadError(what + ": checksum mismatch");
  }
  if (r.remaining() != 0) throw LoadError(what + ": trailing bytes");
  try {
    c.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(what + ": malformed header: " + e.what());
  }
  return c;
}

}  // namespace prodigy
