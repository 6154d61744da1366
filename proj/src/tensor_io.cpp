#include "topogen/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "topogen/errors.hpp"

namespace topogen {
namespace {

constexpr char kMagic[4] = {'T', 'G', 'T', 'A'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeU8 = 3;
constexpr std::uint64_t kMaxElements = 1ull << 30;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(out, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  const std::string& origin;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > bytes.size()) {
      throw ParseError(origin + ": truncated " + what + " at offset " + std::to_string(pos));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes[pos++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
};

std::uint64_t element_count(const std::vector<std::uint64_t>& dims, const std::string& origin) {
  std::uint64_t n = 1;
  for (std::uint64_t d : dims) {
    if (d == 0 || n > kMaxElements / std::max<std::uint64_t>(d, 1)) {
      throw ParseError(origin + ": tensor dims overflow or contain zero");
    }
    n *= d;
  }
  return n;
}

}  // namespace

void TensorArchive::add_f64(const std::string& name, std::vector<std::uint64_t> dims,
                            std::vector<double> values) {
  if (contains(name)) {
    throw InvalidInputError("archive already has a tensor named " + name);
  }
  if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw InvalidInputError("tensor name length out of range");
  }
  if (dims.empty() || dims.size() > 255) {
    throw InvalidInputError("tensor rank out of range");
  }
  std::uint64_t n = 1;
  for (std::uint64_t d : dims) {
    if (d == 0 || n > kMaxElements / d) {
      throw InvalidInputError("tensor " + name + " dims overflow or contain zero");
    }
    n *= d;
  }
  if (n != values.size()) {
    throw InvalidInputError("tensor " + name + " payload does not match its dims");
  }
  Entry e;
  e.name = name;
  e.dtype = kDtypeF64;
  e.dims = std::move(dims);
  e.f64 = std::move(values);
  entries_.push_back(std::move(e));
}

void TensorArchive::add_text(const std::string& name, const std::string& text) {
  if (contains(name)) {
    throw InvalidInputError("archive already has a tensor named " + name);
  }
  if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw InvalidInputError("tensor name length out of range");
  }
  if (text.empty()) {
    throw InvalidInputError("text tensor " + name + " must not be empty");
  }
  Entry e;
  e.name = name;
  e.dtype = kDtypeU8;
  e.dims = {text.size()};
  e.u8.assign(text.begin(), text.end());
  entries_.push_back(std::move(e));
}

bool TensorArchive::contains(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::vector<std::string> TensorArchive::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const Entry& e : entries_) out.push_back(e.name);
  return out;
}

const TensorArchive::Entry& TensorArchive::find(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return e;
  }
  throw InvalidInputError("archive has no tensor named " + name);
}

const std::vector<std::uint64_t>& TensorArchive::dims(const std::string& name) const {
  return find(name).dims;
}

const std::vector<double>& TensorArchive::f64(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype != kDtypeF64) {
    throw InvalidInputError("tensor " + name + " is not f64");
  }
  return e.f64;
}

std::string TensorArchive::text(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype != kDtypeU8) {
    throw InvalidInputError("tensor " + name + " is not text");
  }
  return std::string(e.u8.begin(), e.u8.end());
}

std::vector<std::uint8_t> TensorArchive::to_bytes() const {
  if (entries_.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw InvalidInputError("archive entry count exceeds the format limit");
  }
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(0);
  put_u16(out, static_cast<std::uint16_t>(entries_.size()));

  for (const Entry& e : entries_) {
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(e.dtype);
    out.push_back(static_cast<std::uint8_t>(e.dims.size()));
    for (std::uint64_t d : e.dims) put_u64(out, d);
    if (e.dtype == kDtypeF64) {
      for (double v : e.f64) put_f64(out, v);
    } else {
      out.insert(out.end(), e.u8.begin(), e.u8.end());
    }
  }
  return out;
}

TensorArchive TensorArchive::from_bytes(const std::vector<std::uint8_t>& bytes,
                                        const std::string& origin) {
  Reader r{bytes, origin};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError(origin + ": bad magic, not a tensor archive");
  }
  r.pos = 4;
  const std::uint8_t version = r.u8("version");
  if (version != kVersion) {
    throw ParseError(origin + ": unsupported version " + std::to_string(version));
  }
  r.u8("flags");
  const std::uint16_t count = r.u16("entry count");

  TensorArchive archive;
  for (int i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("name length");
    r.need(name_len, "name");
    std::string name(bytes.begin() + static_cast<long>(r.pos),
                     bytes.begin() + static_cast<long>(r.pos + name_len));
    r.pos += name_len;

    const std::uint8_t dtype = r.u8("dtype");
    const std::uint8_t ndim = r.u8("ndim");
    std::vector<std::uint64_t> dims(ndim);
    for (std::uint8_t d = 0; d < ndim; ++d) dims[d] = r.u64("dims");
    const std::uint64_t n = element_count(dims, origin);

    if (archive.contains(name)) {
      throw ParseError(origin + ": duplicate tensor name " + name);
    }
    if (dtype == kDtypeF64) {
      std::vector<double> values(n);
      for (std::uint64_t k = 0; k < n; ++k) values[k] = r.f64("f64 payload");
      archive.add_f64(name, std::move(dims), std::move(values));
    } else if (dtype == kDtypeU8) {
      r.need(n, "u8 payload");
      Entry e;
      e.name = std::move(name);
      e.dtype = kDtypeU8;
      e.dims = std::move(dims);
      e.u8.assign(bytes.begin() + static_cast<long>(r.pos),
                  bytes.begin() + static_cast<long>(r.pos + n));
      r.pos += n;
      archive.entries_.push_back(std::move(e));
    } else {
      throw ParseError(origin + ": dtype " + std::to_string(dtype) +
                       " is reserved and not supported");
    }
  }
  if (r.pos != bytes.size()) {
    throw ParseError(origin + ": trailing bytes after the last entry at offset " +
                     std::to_string(r.pos));
  }
  return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  const std::vector<std::uint8_t> bytes = to_bytes();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InvalidInputError("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  if (!out) {
    throw InvalidInputError("failed writing " + path.string());
  }
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) {
    throw ParseError("failed reading " + path.string());
  }
  return from_bytes(bytes, path.filename().string());
}

void add_density(TensorArchive& archive, const std::string& name, const DensityField& field) {
  field.validate();
  archive.add_f64(name,
                  {static_cast<std::uint64_t>(field.grid.nelx),
                   static_cast<std::uint64_t>(field.grid.nely)},
                  field.values);
}

DensityField read_density(const TensorArchive& archive, const std::string& name) {
  const auto& d = archive.dims(name);
  if (d.size() != 2) {
    throw ValidationError("tensor " + name + " is not a 2-D density grid");
  }
  DensityField field;
  field.grid = Grid{static_cast<int>(d[0]), static_cast<int>(d[1])};
  field.values = archive.f64(name);
  field.validate();
  return field;
}

}  // namespace topogen
