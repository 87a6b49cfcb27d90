#include "shapex/nn.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "shapex/io.hpp"

namespace shapex::nn {

namespace {

constexpr char kMagic[4] = {'L', 'X', 'W', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw FormatError("weights file truncated");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

std::string metadata_text(const Network& net) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "frozen " << (net.frozen() ? 1 : 0) << "\n";
  ss << "layers " << net.layer_count() << "\n";
  for (const auto& l : net.layers()) {
    const auto& s = l.spec;
    ss << "layer " << s.name << " " << s.in << " " << s.out << " " << to_string(s.activation) << " " << s.slope
       << " " << (s.skip ? 1 : 0) << "\n";
  }
  return ss.str();
}

std::string payload(const Network& net) {
  std::string out;
  out.reserve(net.parameter_count() * sizeof(float));
  for (const auto& l : net.layers()) {
    // Row-major weights, then bias.
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put<float>(out, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<float>(out, l.bias[r]);
  }
  return out;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "";
}

Activation parse_activation(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw FormatError("unknown activation: " + std::string(s));
}

std::string parameter_hash(const Network& net) { return io::sha256_hex(payload(net)); }

std::string serialize_weights(const Network& net) {
  for (const auto& l : net.layers())
    if (l.spec.name.empty() || l.spec.name.find_first_of(" \t\n") != std::string::npos)
      throw ArgumentError("layer names must be non-empty and free of whitespace");
  const std::string meta = metadata_text(net);
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, meta.size());
  out += meta;
  out += payload(net);
  return out;
}

Network deserialize_weights(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad weights magic");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw FormatError("unsupported weights version " + std::to_string(version));
  const auto meta_len = get<std::uint64_t>(bytes, pos);
  if (meta_len > bytes.size() - pos) throw FormatError("weights metadata truncated");
  std::istringstream meta(std::string(bytes.substr(pos, meta_len)));
  pos += meta_len;

  std::string key;
  int frozen = 0;
  std::size_t count = 0;
  if (!(meta >> key >> frozen) || key != "frozen") throw FormatError("weights metadata missing frozen flag");
  if (!(meta >> key >> count) || key != "layers" || count == 0 || count > 4096)
    throw FormatError("weights metadata missing layer count");
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i < count; ++i) {
    LayerSpec s;
    std::string act;
    int skip = 0;
    if (!(meta >> key >> s.name >> s.in >> s.out >> act >> s.slope >> skip) || key != "layer")
      throw FormatError("malformed layer record " + std::to_string(i));
    s.activation = parse_activation(act);
    s.skip = skip != 0;
    specs.push_back(std::move(s));
  }

  std::size_t expected = 0;
  for (const auto& s : specs) expected += static_cast<std::size_t>(s.in) * s.out + static_cast<std::size_t>(s.out);
  if (bytes.size() - pos != expected * sizeof(float))
    throw FormatError("weights payload length " + std::to_string(bytes.size() - pos) + " does not match declared shapes (" +
                      std::to_string(expected * sizeof(float)) + ")");

  Network net;
  try {
    net = Network(specs);
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("invalid layer shapes: ") + e.what());
  }
  for (std::size_t k = 0; k < specs.size(); ++k) {
    auto& l = net.mutable_layer(k);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = get<float>(bytes, pos);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = get<float>(bytes, pos);
  }
  if (frozen) net.freeze();
  return net;
}

void save_weights(const Network& net, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_weights(net));
}

Network load_weights(const std::filesystem::path& path) {
  try {
    return deserialize_weights(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace shapex::nn
