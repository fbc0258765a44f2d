#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kfprop/tensor.hpp"

namespace kfprop {

// Container for named tensors, used for checkpoints, datasets and dumps.
// File format "KPT1": magic, u32 LE entry count, then per entry
//   u16 LE name length, UTF-8 name bytes,
//   u8 dtype (0 = f32, 1 = f64), u8 rank, rank x u64 LE extents,
//   raw little-endian payload.
// Entries keep insertion order so identical content always produces
// identical bytes.
class Archive {
 public:
  struct Entry {
    std::string name;
    std::uint8_t dtype = 0;  // 0 = f32, 1 = f64
    Shape shape;
    std::vector<std::uint8_t> payload;
  };

  void put(const std::string& name, const Tensor<float>& t);
  void put(const std::string& name, const Tensor<double>& t);

  template <typename T>
  Tensor<T> get(const std::string& name) const;

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

 private:
  const Entry& find(const std::string& name) const;
  void put_raw(Entry e);

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace kfprop
