#include "prema/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <zlib.h>

namespace prema {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const unsigned char* p;
  std::size_t left;
  const std::string& path;

  void need(std::size_t n) const {
    if (left < n) throw checkpoint_error("checkpoint truncated: " + path);
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
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& entries, bool f32_mode) {
  std::string buf;
  buf += "PRMA";
  put_u32(buf, 1);
  put_u32(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    if (name.size() > 0xffff) throw checkpoint_error("entry name too long: " + name);
    put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf += name;
    buf.push_back(f32_mode ? 0 : 1);
    buf.push_back(static_cast<char>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put_u64(buf, d);
    for (double v : tensor.data()) {
      if (f32_mode) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(buf, bits);
      } else {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(buf, bits);
      }
    }
  }
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("save_checkpoint: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error("save_checkpoint: write failed for " + path);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || buf.compare(0, 4, "PRMA") != 0) {
    throw checkpoint_error("bad checkpoint magic: " + path);
  }
  const std::size_t body = buf.size() - 4;
  const auto stored_crc = static_cast<std::uint32_t>(
      static_cast<unsigned char>(buf[body]) | (static_cast<unsigned char>(buf[body + 1]) << 8) |
      (static_cast<unsigned char>(buf[body + 2]) << 16) |
      (static_cast<unsigned char>(buf[body + 3]) << 24));
  const auto actual_crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(body)));
  if (stored_crc != actual_crc) {
    throw checkpoint_error("checkpoint CRC mismatch: " + path);
  }

  Reader r{reinterpret_cast<const unsigned char*>(buf.data()) + 4, body - 4, path};
  const std::uint32_t version = r.u32();
  if (version != 1) throw checkpoint_error("unsupported checkpoint version: " + path);
  const std::uint32_t count = r.u32();
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const std::uint16_t name_len = r.u16();
    e.name = r.bytes(name_len);
    r.need(2);
    const unsigned char dtype = *r.p;
    const unsigned char rank = *(r.p + 1);
    r.p += 2;
    r.left -= 2;
    if (dtype > 1) throw checkpoint_error("bad dtype code in " + path);
    e.stored_f32 = dtype == 0;
    for (unsigned d = 0; d < rank; ++d) e.shape.push_back(r.u64());
    const std::size_t n = shape_size(e.shape);
    e.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      if (e.stored_f32) {
        const std::uint32_t bits = r.u32();
        float f;
        std::memcpy(&f, &bits, 4);
        e.values[j] = static_cast<double>(f);
      } else {
        const std::uint64_t bits = r.u64();
        double v;
        std::memcpy(&v, &bits, 8);
        e.values[j] = v;
      }
    }
    entries.push_back(std::move(e));
  }
  if (r.left != 0) throw checkpoint_error("trailing bytes in checkpoint: " + path);
  return entries;
}

void apply_checkpoint(const std::vector<CheckpointEntry>& entries,
                      const std::vector<std::pair<std::string, Tensor>>& targets) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const CheckpointEntry& e : entries) by_name[e.name] = &e;
  for (const auto& [name, tensor] : targets) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw checkpoint_error("checkpoint missing entry '" + name + "'");
    }
    const CheckpointEntry& e = *it->second;
    if (e.shape != tensor.shape()) {
      throw checkpoint_error("checkpoint entry '" + name + "' has shape " + shape_str(e.shape) +
                             ", model expects " + shape_str(tensor.shape()));
    }
    const_cast<Tensor&>(tensor).data() = e.values;
  }
}

}  // namespace prema
