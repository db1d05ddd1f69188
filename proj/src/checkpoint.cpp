// SPDX-License-Identifier: Apache-2.0
#include "kgr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kgr/error.hpp"

namespace kgr {
namespace {

constexpr char kMagic[4] = {'K', 'G', 'N', '1'};

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::uint64_t n) {
    need(n);
    const std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw FormatError("checkpoint is truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string f32_payload(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (double v : values) put(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

std::vector<double> f32_values(const CheckpointEntry& e) {
  if (e.dtype != DType::kF32 || e.payload.size() % 4 != 0) throw FormatError("entry " + e.name + " is not float32");
  Reader r(e.payload);
  std::vector<double> out(e.payload.size() / 4);
  for (double& v : out) v = static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()));
  return out;
}

CheckpointEntry bytes_entry(std::string name, std::string payload) {
  CheckpointEntry e{std::move(name), DType::kBytes, {}, std::move(payload)};
  e.shape = {e.payload.size()};
  return e;
}

const CheckpointEntry& find(const std::vector<CheckpointEntry>& entries, std::string_view name) {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw FormatError("checkpoint has no entry " + std::string(name));
}

std::string entities_text(const graph::KnowledgeGraph& g) {
  std::string out;
  for (const auto& e : g.entities()) out += e.name + "\t" + std::string(graph::region_name(e.region)) + "\n";
  return out;
}

graph::KnowledgeGraph graph_from(const CheckpointEntry& entities, const CheckpointEntry& adjacency) {
  std::vector<graph::DiseaseEntity> nodes;
  std::istringstream in(entities.payload);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    const auto region = tab == std::string::npos ? std::nullopt : graph::parse_region(line.substr(tab + 1));
    if (!region) throw FormatError("checkpoint graph entity line is malformed: " + line);
    nodes.push_back({line.substr(0, tab), *region, nodes.size()});
  }
  const std::vector<double> a = f32_values(adjacency);
  if (a.size() != nodes.size() * nodes.size()) throw FormatError("checkpoint adjacency does not match entity count");
  const std::size_t n = nodes.size();
  return graph::KnowledgeGraph(std::move(nodes), graph::SquareMatrix{n, a});
}

}  // namespace

std::string encode_entries(const std::vector<CheckpointEntry>& entries, std::uint32_t version) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::uint64_t d : e.shape) put<std::uint64_t>(out, d);
    put<std::uint64_t>(out, e.payload.size());
    out += e.payload;
  }
  return out;
}

std::vector<CheckpointEntry> decode_entries(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<CheckpointEntry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = std::string(r.take(r.get<std::uint32_t>()));
    const auto tag = r.get<std::uint8_t>();
    if (tag > 2) throw FormatError("entry " + e.name + " has unknown dtype " + std::to_string(tag));
    e.dtype = static_cast<DType>(tag);
    e.shape.resize(r.get<std::uint32_t>());
    for (auto& d : e.shape) d = r.get<std::uint64_t>();
    e.payload = std::string(r.take(r.get<std::uint64_t>()));
    out.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return out;
}

std::string serialize_checkpoint(const ReportModel& model) {
  std::vector<CheckpointEntry> entries;
  entries.push_back(bytes_entry("meta.config", model.config().to_text()));
  std::string vocab;
  for (const auto& t : model.tokenizer().vocabulary()) vocab += t + "\n";
  entries.push_back(bytes_entry("meta.vocab", vocab));
  entries.push_back(bytes_entry("meta.graph.entities", entities_text(model.graph())));
  const auto& adj = model.graph().adjacency();
  entries.push_back({"meta.graph.adjacency", DType::kF32, {adj.n, adj.n}, f32_payload(adj.values)});
  std::string seed;
  put<std::uint64_t>(seed, model.config().seed);
  entries.push_back({"meta.seed", DType::kI64, {1}, seed});
  for (const NamedParam& p : model.parameters()) {
    entries.push_back({p.name, DType::kF32, {p.tensor.shape().begin(), p.tensor.shape().end()},
                       f32_payload(p.tensor.values())});
  }
  return encode_entries(entries);
}

ReportModel deserialize_checkpoint(std::string_view bytes) {
  const auto entries = decode_entries(bytes);
  const TrainConfig cfg = TrainConfig::parse(find(entries, "meta.config").payload);

  std::vector<std::string> vocab;
  std::istringstream in(find(entries, "meta.vocab").payload);
  for (std::string line; std::getline(in, line);) vocab.push_back(line);

  ReportModel model = ReportModel::create(cfg, Tokenizer::from_vocabulary(std::move(vocab)),
                                          graph_from(find(entries, "meta.graph.entities"),
                                                     find(entries, "meta.graph.adjacency")));
  const ParameterList params = model.parameters();
  std::size_t stored = 0;
  for (const auto& e : entries) stored += e.name.rfind("meta.", 0) == 0 ? 0 : 1;
  if (stored != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(stored) + " parameters, model expects " +
                      std::to_string(params.size()));
  }
  for (NamedParam p : params) {
    const CheckpointEntry& e = find(entries, p.name);
    if (!std::equal(e.shape.begin(), e.shape.end(), p.tensor.shape().begin(), p.tensor.shape().end())) {
      throw FormatError("parameter " + p.name + " has shape mismatch");
    }
    const std::vector<double> v = f32_values(e);
    std::copy(v.begin(), v.end(), p.tensor.mutable_values().begin());
  }
  return model;
}

void save_checkpoint(const std::string& path, const ReportModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path);
}

ReportModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace kgr
