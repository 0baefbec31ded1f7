#include "moelens/mltb.hpp"

#include "moelens/io.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace moelens {

static_assert(std::endian::native == std::endian::little, "MLTB payloads are read in place");

namespace {

constexpr std::size_t kMagicLen = sizeof(kMltbMagic) - 1;

std::size_t align_up(std::size_t n) { return (n + kMltbAlignment - 1) / kMltbAlignment * kMltbAlignment; }

nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["n_layers"] = c.n_layers;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["n_heads"] = c.n_heads;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["rope_theta"] = c.rope_theta;
  j["norm_eps"] = c.norm_eps;
  j["tied_head"] = c.tied_head;
  return j;
}

ModelConfig config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  try {
    c.n_layers = j.at("n_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.rope_theta = j.at("rope_theta").get<double>();
    c.norm_eps = j.at("norm_eps").get<double>();
    c.tied_head = j.at("tied_head").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed MLTB header: ") + e.what());
  }
  c.validate();
  return c;
}

std::string tensor_error(const std::string& what, const std::string& name, std::size_t offset) {
  return "MLTB: " + what + " in tensor '" + name + "' at offset " + std::to_string(offset);
}

}  // namespace

std::string serialize_mltb(const ModelBundle& model) {
  model.validate();
  const auto refs = tensor_refs(model.weights);

  nlohmann::ordered_json header = config_json(model.config);
  auto& index = header["tensors"] = nlohmann::ordered_json::array();
  std::size_t cursor = 0;
  for (const auto& t : refs) {
    index.push_back({{"name", t.name}, {"dims", t.dims}, {"offset", cursor}});
    cursor = align_up(cursor + t.data.size() * sizeof(float));
  }
  const std::string header_text = header.dump();

  std::string out(kMltbMagic, kMagicLen);
  const std::uint64_t len = header_text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += header_text;
  const std::size_t payload_start = align_up(out.size());
  out.resize(payload_start, '\0');
  for (size_t t = 0; t < refs.size(); ++t) {
    const std::size_t at = payload_start + index[t]["offset"].get<std::size_t>();
    out.resize(at, '\0');
    out.append(reinterpret_cast<const char*>(refs[t].data.data()), refs[t].data.size() * sizeof(float));
  }
  return out;
}

ModelBundle parse_mltb(const std::string& bytes) {
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kMltbMagic) != 0)
    throw DataError("MLTB: bad magic at offset 0");
  if (bytes.size() < kMagicLen + sizeof(std::uint64_t))
    throw DataError("MLTB: truncated header length at offset " + std::to_string(kMagicLen));
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kMagicLen, sizeof(len));
  const std::size_t header_start = kMagicLen + sizeof(len);
  if (len > bytes.size() - header_start)
    throw DataError("MLTB: truncated JSON header at offset " + std::to_string(header_start));

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.begin() + header_start,
                                           bytes.begin() + header_start + len);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed MLTB header: ") + e.what());
  }
  ModelBundle model;
  model.config = config_from_json(header);
  model.weights = DecoderWeights<float>::zeros(model.config);

  const std::size_t payload_start = align_up(header_start + len);
  if (!header.contains("tensors") || !header["tensors"].is_array())
    throw DataError("malformed MLTB header: missing tensor index");
  const auto& index = header["tensors"];
  auto refs = tensor_refs(model.weights);
  if (index.size() != refs.size())
    throw DataError("MLTB: tensor index has " + std::to_string(index.size()) + " entries, config implies " +
                    std::to_string(refs.size()));

  for (size_t t = 0; t < refs.size(); ++t) {
    auto& ref = refs[t];
    std::string name;
    std::vector<std::int64_t> dims;
    std::size_t offset = 0;
    try {
      name = index[t].at("name").get<std::string>();
      dims = index[t].at("dims").get<std::vector<std::int64_t>>();
      offset = index[t].at("offset").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed MLTB header: tensor entry " + std::to_string(t) + ": " + e.what());
    }
    const std::size_t at = payload_start + offset;
    if (name != ref.name) throw DataError(tensor_error("unexpected tensor name '" + name + "'", ref.name, at));
    if (dims != ref.dims) throw DataError(tensor_error("shape mismatch vs. config", ref.name, at));
    if (offset % kMltbAlignment != 0) throw DataError(tensor_error("misaligned payload", ref.name, at));
    const std::size_t nbytes = ref.data.size() * sizeof(float);
    if (at > bytes.size() || nbytes > bytes.size() - at)
      throw DataError(tensor_error("truncated file (need " + std::to_string(nbytes) + " bytes, have " +
                                       std::to_string(at > bytes.size() ? 0 : bytes.size() - at) + ")",
                                   ref.name, at));
    std::memcpy(ref.data.data(), bytes.data() + at, nbytes);
    for (size_t i = 0; i < ref.data.size(); ++i) {
      if (!std::isfinite(ref.data[i]))
        throw DataError(tensor_error("non-finite value", ref.name, at + i * sizeof(float)));
    }
  }
  return model;
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_mltb(buf.str());
}

void save_model(const ModelBundle& model, const std::filesystem::path& path) {
  write_text_file(path, serialize_mltb(model));
}

}  // namespace moelens
