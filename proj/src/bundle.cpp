#include "txt/bundle.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "bundle serialization assumes a little-endian host");

namespace txt {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (auto b : bytes) crc = table[(crc ^ b) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(u_n(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(u_n(4)); }
  std::uint64_t u64() { return u_n(8); }

  std::span<const std::uint8_t> raw(std::uint64_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::string str(std::uint64_t n) {
    auto s = raw(n);
    return std::string(reinterpret_cast<const char*>(s.data()), s.size());
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;

  void need(std::uint64_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("bundle section ends unexpectedly");
  }
  std::uint64_t u_n(int width) {
    need(static_cast<std::uint64_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
};

std::string meta_text(const ModelBundle& b) {
  std::ostringstream os;
  os << "kind=" << b.kind << "\n";
  os << "tag=" << b.tag << "\n";
  os << "created=" << b.created << "\n";
  os << "precision=" << b.precision << "\n";
  for (const auto& [k, v] : b.config) os << k << "=" << v << "\n";
  return os.str();
}

void parse_meta(const std::string& text, ModelBundle& b) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad meta line: '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "kind")
      b.kind = value;
    else if (key == "tag")
      b.tag = value;
    else if (key == "created")
      b.created = value;
    else if (key == "precision")
      b.precision = value;
    else
      b.config.emplace_back(key, value);
  }
  if (b.kind.empty()) throw FormatError("bundle meta is missing its kind");
  if (b.precision != "standard" && b.precision != "wide")
    throw FormatError("bundle precision must be standard or wide, got '" + b.precision + "'");
}

std::vector<std::uint8_t> params_bytes(const std::vector<NamedArray>& params) {
  std::vector<std::uint8_t> out;
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    if (p.name.size() > 0xFFFF) throw ContractError("parameter name too long");
    put_u16(out, static_cast<std::uint16_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    out.push_back(p.width);
    out.push_back(static_cast<std::uint8_t>(p.shape.size()));
    for (auto d : p.shape) put_u64(out, static_cast<std::uint64_t>(d));
    const auto expect = static_cast<std::uint64_t>(numel(p.shape)) * p.width;
    if (p.bytes.size() != expect)
      throw ContractError("array " + p.name + " payload does not match its shape");
    out.insert(out.end(), p.bytes.begin(), p.bytes.end());
  }
  return out;
}

std::vector<NamedArray> parse_params(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::uint32_t count = r.u32();
  std::vector<NamedArray> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray p;
    p.name = r.str(r.u16());
    p.width = r.raw(1)[0];
    if (p.width != 4 && p.width != 8)
      throw FormatError("array " + p.name + " has unsupported width");
    const std::uint8_t ndim = r.raw(1)[0];
    for (std::uint8_t d = 0; d < ndim; ++d)
      p.shape.push_back(static_cast<std::int64_t>(r.u64()));
    for (auto d : p.shape)
      if (d <= 0) throw FormatError("array " + p.name + " has a non-positive dimension");
    const auto payload = static_cast<std::uint64_t>(numel(p.shape)) * p.width;
    auto raw = r.raw(payload);
    p.bytes.assign(raw.begin(), raw.end());
    out.push_back(std::move(p));
  }
  if (!r.done()) throw FormatError("trailing bytes after parameter table");
  return out;
}

void put_section(std::vector<std::uint8_t>& out, const std::string& name,
                 std::span<const std::uint8_t> payload) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u64(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kBundleMagic, kBundleMagic + 8);
  put_u32(out, bundle.format_version);
  const std::string meta = meta_text(bundle);
  put_section(out, "meta", as_bytes(meta));
  const std::string vocab = vocabs_to_text(bundle.vocabs);
  put_section(out, "vocab", as_bytes(vocab));
  const auto params = params_bytes(bundle.params);
  put_section(out, "params", params);
  put_u32(out, crc32(out));
  return out;
}

ModelBundle deserialize_bundle(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw ChecksumError("bundle file too short to validate");
  if (std::memcmp(bytes.data(), kBundleMagic, 8) != 0)
    throw FormatError("bad bundle magic: not a model bundle file");
  const auto body = bytes.subspan(0, bytes.size() - 4);
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  const std::uint32_t computed = crc32(body);
  if (stored != computed) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "bundle checksum mismatch: stored %08x, computed %08x",
                  stored, computed);
    throw ChecksumError(buf);
  }

  Reader r(body.subspan(8));
  ModelBundle bundle;
  bundle.format_version = r.u32();
  if (bundle.format_version != kBundleVersion)
    throw FormatError("unsupported bundle version " + std::to_string(bundle.format_version));
  std::string meta, vocab;
  std::vector<std::uint8_t> params;
  for (const char* expected : {"meta", "vocab", "params"}) {
    const std::string name = r.str(r.u32());
    if (name != expected)
      throw FormatError("expected section '" + std::string(expected) + "', found '" + name + "'");
    auto payload = r.raw(r.u64());
    if (name == "meta")
      meta.assign(payload.begin(), payload.end());
    else if (name == "vocab")
      vocab.assign(payload.begin(), payload.end());
    else
      params.assign(payload.begin(), payload.end());
  }
  if (!r.done()) throw FormatError("trailing bytes after final bundle section");
  parse_meta(meta, bundle);
  bundle.vocabs = vocabs_from_text(vocab);
  bundle.params = parse_params(params);
  return bundle;
}

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  const auto bytes = serialize_bundle(bundle);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open bundle for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("bundle write failed: " + path);
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open bundle: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_bundle(bytes);
}

}  // namespace txt
