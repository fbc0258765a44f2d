#include "kfprop/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace kfprop {
namespace {

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::uint8_t* p;
  std::size_t left;
  std::string where;

  void need(std::size_t n) const {
    if (left < n) throw std::runtime_error("truncated archive: " + where);
  }
  std::uint8_t u8() {
    need(1);
    std::uint8_t v = *p;
    ++p;
    --left;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
};

template <typename T>
std::vector<std::uint8_t> encode_payload(const Tensor<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::vector<std::uint8_t> out;
  out.reserve(t.numel() * sizeof(T));
  for (T v : t.data) {
    Bits b = std::bit_cast<Bits>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i)
      out.push_back(static_cast<std::uint8_t>((b >> (8 * i)) & 0xff));
  }
  return out;
}

template <typename T>
Tensor<T> decode_payload(const Archive::Entry& e) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  Tensor<T> t(e.shape);
  if (e.payload.size() != t.numel() * sizeof(T))
    throw std::runtime_error("archive entry '" + e.name + "' payload size mismatch");
  const std::uint8_t* p = e.payload.data();
  for (std::size_t i = 0; i < t.numel(); ++i) {
    Bits b = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k)
      b |= static_cast<Bits>(p[i * sizeof(T) + k]) << (8 * k);
    t.data[i] = std::bit_cast<T>(b);
  }
  return t;
}

}  // namespace

void Archive::put_raw(Entry e) {
  if (index_.count(e.name))
    throw std::invalid_argument("archive already contains entry '" + e.name + "'");
  if (e.name.size() > 0xffff) throw std::invalid_argument("archive entry name too long");
  index_[e.name] = entries_.size();
  entries_.push_back(std::move(e));
}

void Archive::put(const std::string& name, const Tensor<float>& t) {
  put_raw(Entry{name, 0, t.shape, encode_payload(t)});
}

void Archive::put(const std::string& name, const Tensor<double>& t) {
  put_raw(Entry{name, 1, t.shape, encode_payload(t)});
}

const Archive::Entry& Archive::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::runtime_error("archive has no entry '" + name + "'");
  return entries_[it->second];
}

template <>
Tensor<float> Archive::get<float>(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype != 0) throw std::runtime_error("archive entry '" + name + "' is not f32");
  return decode_payload<float>(e);
}

template <>
Tensor<double> Archive::get<double>(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype != 1) throw std::runtime_error("archive entry '" + name + "' is not f64");
  return decode_payload<double>(e);
}

void Archive::save(const std::string& path) const {
  std::vector<std::uint8_t> buf;
  buf.push_back('K');
  buf.push_back('P');
  buf.push_back('T');
  buf.push_back('1');
  append_u32(buf, static_cast<std::uint32_t>(entries_.size()));
  for (const Entry& e : entries_) {
    append_u16(buf, static_cast<std::uint16_t>(e.name.size()));
    buf.insert(buf.end(), e.name.begin(), e.name.end());
    buf.push_back(e.dtype);
    buf.push_back(static_cast<std::uint8_t>(e.shape.size()));
    for (std::size_t d : e.shape) append_u64(buf, static_cast<std::uint64_t>(d));
    buf.insert(buf.end(), e.payload.begin(), e.payload.end());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

Archive Archive::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{buf.data(), buf.size(), path};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "KPT1", 4) != 0)
    throw std::runtime_error("'" + path + "' is not a KPT1 archive");
  std::uint32_t count = r.u32();

  Archive a;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    std::uint16_t name_len = r.u16();
    e.name.resize(name_len);
    r.bytes(e.name.data(), name_len);
    e.dtype = r.u8();
    if (e.dtype > 1) throw std::runtime_error("archive entry '" + e.name + "' has unknown dtype");
    std::uint8_t rank = r.u8();
    e.shape.resize(rank);
    for (std::uint8_t d = 0; d < rank; ++d) e.shape[d] = static_cast<std::size_t>(r.u64());
    std::size_t elem = e.dtype == 0 ? 4 : 8;
    std::size_t bytes = shape_numel(e.shape) * elem;
    e.payload.resize(bytes);
    r.bytes(e.payload.data(), bytes);
    a.put_raw(std::move(e));
  }
  if (r.left != 0) throw std::runtime_error("trailing bytes in archive '" + path + "'");
  return a;
}

}  // namespace kfprop
