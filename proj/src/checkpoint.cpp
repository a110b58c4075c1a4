#include "hetnet/checkpoint.hpp"

#include <cstdint>
#include <fstream>

namespace hetnet {

namespace {

constexpr char kMagic[8] = {'H', 'E', 'T', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string read_str(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

std::ifstream open_and_check(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kMagic))
    throw ConfigError("checkpoint: '" + path + "' is not a checkpoint file");
  return is;
}

}  // namespace

void save_checkpoint(const std::string& path, Module& root,
                     const std::map<std::string, std::string>& meta,
                     const std::string& key_prefix) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("checkpoint: cannot write '" + path + "'");
  os.write(kMagic, 8);
  write_u32(os, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    write_str(os, k);
    write_str(os, v);
  }
  std::uint32_t count = 0;
  root.for_each_state("", [&](const std::string&, Tensor&, bool) { ++count; });
  write_u32(os, count);
  root.for_each_state(key_prefix, [&](const std::string& key, Tensor& t, bool) {
    write_str(os, key);
    const Shape4 s = t.shape();
    write_i64(os, s.b);
    write_i64(os, s.c);
    write_i64(os, s.h);
    write_i64(os, s.w);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(double))));
  });
  if (!os) throw InputError("checkpoint: write failed for '" + path + "'");
}

void load_checkpoint(const std::string& path, Module& root, const std::string& key_prefix) {
  std::ifstream is = open_and_check(path);
  const std::uint32_t n_meta = read_u32(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    read_str(is);
    read_str(is);
  }
  struct Entry {
    Shape4 shape;
    std::streampos pos;
  };
  std::map<std::string, Entry> entries;
  const std::uint32_t n = read_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string key = read_str(is);
    Shape4 s{read_i64(is), read_i64(is), read_i64(is), read_i64(is)};
    entries[key] = {s, is.tellg()};
    is.seekg(static_cast<std::streamoff>(s.numel() * static_cast<std::int64_t>(sizeof(double))),
             std::ios::cur);
  }
  if (!is) throw ConfigError("checkpoint: truncated file '" + path + "'");

  root.for_each_state("", [&](const std::string& raw_key, Tensor& t, bool) {
    const std::string key = join_key(key_prefix, raw_key);
    auto it = entries.find(key);
    if (it == entries.end())
      throw ConfigError("checkpoint: '" + path + "' is missing layer '" + key + "'");
    if (!(it->second.shape == t.shape()))
      throw ConfigError("checkpoint: shape mismatch at layer '" + key + "': file has " +
                        it->second.shape.str() + ", model expects " + t.shape().str());
    is.clear();
    is.seekg(it->second.pos);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(double))));
  });
  if (!is) throw ConfigError("checkpoint: read failed for '" + path + "'");
}

std::map<std::string, std::string> read_checkpoint_meta(const std::string& path) {
  std::ifstream is = open_and_check(path);
  std::map<std::string, std::string> meta;
  const std::uint32_t n_meta = read_u32(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = read_str(is);
    meta[k] = read_str(is);
  }
  return meta;
}

std::vector<std::string> checkpoint_keys(const std::string& path) {
  std::ifstream is = open_and_check(path);
  const std::uint32_t n_meta = read_u32(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    read_str(is);
    read_str(is);
  }
  std::vector<std::string> keys;
  const std::uint32_t n = read_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    keys.push_back(read_str(is));
    Shape4 s{read_i64(is), read_i64(is), read_i64(is), read_i64(is)};
    is.seekg(static_cast<std::streamoff>(s.numel() * static_cast<std::int64_t>(sizeof(double))),
             std::ios::cur);
  }
  return keys;
}

}  // namespace hetnet
