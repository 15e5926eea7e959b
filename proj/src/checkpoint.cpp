// Checkpoint byte layout (all integers and reals little-endian):
//
//   magic        8 bytes   "CHPRCKPT"
//   version      u32       format version (1)
//   header_len   u64       length of the header text
//   header       bytes     UTF-8 `key = value` lines: version string, model
//                          configuration (charset, tagsets) and `meta.*` keys
//   n_tensors    u32
//   per tensor:
//     name_len   u32
//     name       bytes
//     rank       u32       always 2
//     rows       u64
//     cols       u64
//     values     rows * cols f64, row-major

#include <charprobe/model.hpp>

#include <charprobe/error.hpp>

#include <bit>
#include <cstring>

namespace charprobe {

namespace {

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = to_little_endian(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void put_bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little_endian(v);
  }
  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DataError("checkpoint is truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::string hex(char32_t c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%x", static_cast<unsigned>(c));
  return buf;
}

void check_token(const std::string& s, const std::string& what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
    throw ConfigError(what + " '" + s + "' must be non-empty and contain no whitespace");
  }
}

}  // namespace

KeyValues model_config_to_key_values(const ModelConfig& c) {
  KeyValues kv;
  kv.set("char_emb_dim", std::to_string(c.char_emb_dim));
  kv.set("fwd_units", std::to_string(c.fwd_units));
  kv.set("bwd_units", std::to_string(c.bwd_units));
  kv.set("word_hidden_total", std::to_string(c.word_hidden_total));
  kv.set("word_layers", std::to_string(c.word_layers));
  kv.set("dropout_rate", format_double(c.dropout_rate));
  kv.set("char_forget_bias", format_double(c.char_forget_bias));
  std::string charset;
  for (char32_t ch : c.charset.symbols()) {
    if (!charset.empty()) charset += ' ';
    charset += hex(ch);
  }
  kv.set("charset", charset);
  for (const Attribute& a : c.attributes) {
    check_token(a.name, "attribute name");
    std::string line = a.name;
    for (const std::string& v : a.values) {
      check_token(v, "attribute value");
      line += ' ' + v;
    }
    kv.append("attribute", line);
  }
  return kv;
}

ModelConfig model_config_from_key_values(const KeyValues& kv) {
  ModelConfig c;
  c.char_emb_dim = kv.get_int("char_emb_dim", c.char_emb_dim);
  c.fwd_units = kv.get_int("fwd_units", c.fwd_units);
  c.bwd_units = kv.get_int("bwd_units", c.bwd_units);
  c.word_hidden_total = kv.get_int("word_hidden_total", c.word_hidden_total);
  c.word_layers = kv.get_int("word_layers", c.word_layers);
  c.dropout_rate = kv.get_double("dropout_rate", c.dropout_rate);
  c.char_forget_bias = kv.get_double("char_forget_bias", c.char_forget_bias);
  std::vector<char32_t> symbols;
  for (const std::string& h : split(kv.get_or("charset", ""), ' ')) {
    if (h.empty()) continue;
    symbols.push_back(static_cast<char32_t>(std::stoul(h, nullptr, 16)));
  }
  c.charset = Charset(std::move(symbols));
  for (const std::string& line : kv.get_all("attribute")) {
    auto parts = split(line, ' ');
    Attribute a{parts.front(), std::vector<std::string>(parts.begin() + 1, parts.end())};
    c.attributes.push_back(std::move(a));
  }
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  KeyValues header;
  header.set("format", "charprobe-checkpoint/" + std::to_string(kCheckpointVersion));
  const KeyValues config_kv = model_config_to_key_values(ckpt.config);
  for (const auto& [k, v] : config_kv.entries()) header.append(k, v);
  for (const auto& [k, v] : ckpt.metadata.entries()) header.append("meta." + k, v);
  const std::string text = header.to_string();

  Writer w;
  w.put_bytes(std::string_view(kCheckpointMagic, 8));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(text.size());
  w.put_bytes(text);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const Parameter& p = ckpt.params[i];
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.put_bytes(p.name);
    w.put<std::uint32_t>(2);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(p.value.rows()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(p.value.cols()));
    for (Eigen::Index k = 0; k < p.value.size(); ++k) w.put<double>(p.value.data()[k]);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.get_bytes(8) != std::string_view(kCheckpointMagic, 8)) throw DataError("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = r.get<std::uint64_t>();
  const KeyValues header = KeyValues::parse(r.get_bytes(header_len));

  Checkpoint ckpt;
  KeyValues config_kv;
  for (const auto& [k, v] : header.entries()) {
    if (k.starts_with("meta.")) {
      ckpt.metadata.append(k.substr(5), v);
    } else if (k != "format") {
      config_kv.append(k, v);
    }
  }
  ckpt.config = model_config_from_key_values(config_kv);

  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name(r.get_bytes(r.get<std::uint32_t>()));
    if (r.get<std::uint32_t>() != 2) throw DataError("tensor '" + name + "' is not rank 2");
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows != 0 && cols > bytes.size() / 8 / rows) throw DataError("tensor '" + name + "' is truncated");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.get<double>();
    ckpt.params.add(name, std::move(m));
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint tensors");
  Tagger check(ckpt.config, ckpt.params);  // validates names and shapes
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace charprobe
