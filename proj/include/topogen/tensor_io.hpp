#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "topogen/grid.hpp"

namespace topogen {

// Self-describing binary tensor container, little-endian throughout:
//
//   "TGTA" | version u8 | flags u8 | entry count u16
//   per entry: name_len u16 | name bytes | dtype u8 | ndim u8
//              | dims u64[ndim] | row-major payload
//
// dtype 0 = f64, 3 = u8 (text/metadata); 1 (f32) and 2 (i64) are reserved.
// Grid-shaped tensors use dims [nelx, nely] with y fastest, matching the
// element numbering everywhere else in the library.
class TensorArchive {
 public:
  void add_f64(const std::string& name, std::vector<std::uint64_t> dims,
               std::vector<double> values);
  void add_text(const std::string& name, const std::string& text);

  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  const std::vector<std::uint64_t>& dims(const std::string& name) const;
  const std::vector<double>& f64(const std::string& name) const;
  std::string text(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);
  static TensorArchive from_bytes(const std::vector<std::uint8_t>& bytes,
                                  const std::string& origin = "bytes");
  std::vector<std::uint8_t> to_bytes() const;

 private:
  struct Entry {
    std::string name;
    std::uint8_t dtype = 0;
    std::vector<std::uint64_t> dims;
    std::vector<double> f64;
    std::vector<std::uint8_t> u8;
  };

  const Entry& find(const std::string& name) const;

  std::vector<Entry> entries_;
};

// Density fields are stored as f64 tensors of dims [nelx, nely].
void add_density(TensorArchive& archive, const std::string& name, const DensityField& field);
DensityField read_density(const TensorArchive& archive, const std::string& name);

}  // namespace topogen
