#include "moelens/mask.hpp"

#include "moelens/io.hpp"

#include <json.hpp>

namespace moelens {

std::string MaskProvenance::describe() const {
  switch (kind) {
    case Kind::threshold:
      return "threshold(" + format_real(tau) + ")";
    case Kind::top_percent:
      return "top_percent(" + format_real(percent) + ")";
    case Kind::random:
      return "random(" + std::to_string(seed) + ")";
    case Kind::full:
      break;
  }
  return "full";
}

std::vector<int> PruneMask::layer_keep_counts() const {
  std::vector<int> counts(n_layers());
  for (int l = 0; l < n_layers(); ++l) counts[l] = static_cast<int>(keep.row(l).count());
  return counts;
}

PruneMask PruneMask::all_keep(int n_layers, int n_experts) {
  PruneMask m;
  m.keep = KeepMatrix::Constant(n_layers, n_experts, true);
  return m;
}

std::string keep_bits_to_hex(const KeepMatrix& keep) {
  static constexpr char kHex[] = "0123456789abcdef";
  const Eigen::Index n = keep.size();
  std::string out((n + 3) / 4, '0');
  for (Eigen::Index i = 0; i < n; ++i) {
    if (keep(i / keep.cols(), i % keep.cols())) {
      const int nibble = static_cast<int>(out[i / 4] >= 'a' ? out[i / 4] - 'a' + 10 : out[i / 4] - '0');
      out[i / 4] = kHex[nibble | (8 >> (i % 4))];
    }
  }
  return out;
}

KeepMatrix keep_bits_from_hex(const std::string& hex, int rows, int cols) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
  if (static_cast<Eigen::Index>(hex.size()) != (n + 3) / 4)
    throw DataError("mask: keep bitstring has " + std::to_string(hex.size()) + " hex digits, expected " +
                    std::to_string((n + 3) / 4));
  KeepMatrix keep(rows, cols);
  for (Eigen::Index i = 0; i < n; ++i) {
    const char ch = hex[i / 4];
    int nibble;
    if (ch >= '0' && ch <= '9') nibble = ch - '0';
    else if (ch >= 'a' && ch <= 'f') nibble = ch - 'a' + 10;
    else if (ch >= 'A' && ch <= 'F') nibble = ch - 'A' + 10;
    else throw DataError("mask: invalid hex digit in keep bitstring");
    keep(i / cols, i % cols) = (nibble & (8 >> (i % 4))) != 0;
  }
  return keep;
}

std::string mask_to_json(const PruneMask& m) {
  nlohmann::ordered_json prov;
  switch (m.provenance.kind) {
    case MaskProvenance::Kind::threshold:
      prov["kind"] = "threshold";
      prov["tau"] = m.provenance.tau;
      break;
    case MaskProvenance::Kind::top_percent:
      prov["kind"] = "top_percent";
      prov["percent"] = m.provenance.percent;
      break;
    case MaskProvenance::Kind::random:
      prov["kind"] = "random";
      prov["seed"] = m.provenance.seed;
      prov["layer_counts"] = m.provenance.layer_counts;
      break;
    case MaskProvenance::Kind::full:
      prov["kind"] = "full";
      break;
  }
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["n_layers"] = m.n_layers();
  j["n_experts"] = m.n_experts();
  j["provenance"] = prov;
  j["source"] = m.source;
  j["kept_proportion"] = m.kept_proportion();
  j["keep"] = keep_bits_to_hex(m.keep);
  return j.dump() + "\n";
}

PruneMask mask_from_json(const std::string& text) {
  PruneMask m;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != 1) throw DataError("mask: unsupported version");
    const int rows = j.at("n_layers").get<int>();
    const int cols = j.at("n_experts").get<int>();
    if (rows < 1 || cols < 1) throw DataError("mask: dims must be >= 1");
    m.keep = keep_bits_from_hex(j.at("keep").get<std::string>(), rows, cols);
    m.source = j.value("source", "");
    const auto& prov = j.at("provenance");
    const std::string kind = prov.at("kind").get<std::string>();
    if (kind == "threshold") {
      m.provenance.kind = MaskProvenance::Kind::threshold;
      m.provenance.tau = prov.at("tau").get<double>();
    } else if (kind == "top_percent") {
      m.provenance.kind = MaskProvenance::Kind::top_percent;
      m.provenance.percent = prov.at("percent").get<double>();
    } else if (kind == "random") {
      m.provenance.kind = MaskProvenance::Kind::random;
      m.provenance.seed = prov.at("seed").get<std::uint64_t>();
      m.provenance.layer_counts = prov.at("layer_counts").get<std::vector<int>>();
      if (m.provenance.layer_counts != m.layer_keep_counts())
        throw DataError("mask: random provenance layer_counts disagree with keep bits");
    } else if (kind == "full") {
      m.provenance.kind = MaskProvenance::Kind::full;
    } else {
      throw DataError("mask: unknown provenance kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed mask file: ") + e.what());
  }
  return m;
}

PruneMask load_mask(const std::filesystem::path& path) { return mask_from_json(read_text_file(path)); }

void save_mask(const PruneMask& mask, const std::filesystem::path& path) { write_text_file(path, mask_to_json(mask)); }

}  // namespace moelens
