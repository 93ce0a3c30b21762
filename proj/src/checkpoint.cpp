#include "getral/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace getral {

using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string take(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::string> vocab_tail(const Vocab& v) { return {v.words().begin() + 1, v.words().end()}; }

Vocab vocab_from(const json& words) {
  Vocab v;
  for (const auto& w : words) v.add(w.get<std::string>());
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::string out = "GTRL";
  put_u32(out, kCheckpointVersion);
  const std::string meta = checkpoint.metadata.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  for (const auto& [name, m] : checkpoint.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, 2);
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    for (double v : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}));
  if (r.take(4) != "GTRL") throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  const auto version = r.uint(4);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  try {
    ck.metadata = json::parse(r.take(r.uint(4)));
  } catch (const json::parse_error& e) {
    throw CheckpointError(path.string() + ": bad metadata: " + e.what());
  }
  while (!r.done()) {
    std::string name = r.take(r.uint(4));
    const auto rank = r.uint(4);
    if (rank > 2) throw CheckpointError("tensor '" + name + "' has rank " + std::to_string(rank));
    std::uint64_t dims[2] = {1, 1};
    for (std::uint64_t i = 0; i < rank; ++i) dims[rank == 1 ? 1 : i] = r.uint(8);
    Matrix m(dims[0], dims[1]);
    for (double& v : m.data()) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
    ck.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ck;
}

void save_model(const std::filesystem::path& path, ModelBundle& bundle) {
  Checkpoint ck;
  ck.metadata["config"] = config_to_json(bundle.config);
  ck.metadata["vocab"] = vocab_tail(bundle.lexicon.words);
  ck.metadata["vocab_hash"] = bundle.lexicon.words.hash();
  ck.metadata["speakers"] = vocab_tail(bundle.lexicon.speakers);
  ck.metadata["publishers"] = vocab_tail(bundle.lexicon.publishers);
  ck.metadata["metric"] = bundle.metric;
  bundle.params.visit([&](const std::string& name, Param& p) { ck.tensors.emplace_back(name, p.value); });
  write_checkpoint(path, ck);
}

ModelBundle load_model(const std::filesystem::path& path) {
  Checkpoint ck = read_checkpoint(path);
  ModelBundle b;
  try {
    b.config = config_from_json(ck.metadata.at("config"));
    b.lexicon.words = vocab_from(ck.metadata.at("vocab"));
    b.lexicon.speakers = vocab_from(ck.metadata.at("speakers"));
    b.lexicon.publishers = vocab_from(ck.metadata.at("publishers"));
    if (ck.metadata.at("vocab_hash").get<std::uint64_t>() != b.lexicon.words.hash()) {
      throw CheckpointError(path.string() + ": vocabulary hash mismatch");
    }
    if (ck.metadata.contains("metric")) b.metric = ck.metadata["metric"];
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad metadata: " + e.what());
  }

  Rng rng(0);
  EmbeddingTable shape{Matrix(b.lexicon.words.size(), b.config.model.embed_dim), {}};
  b.params = ModelParams::init(b.config.model, b.lexicon, shape, rng);
  std::map<std::string, Matrix*> stored;
  for (auto& [name, m] : ck.tensors) {
    if (!stored.emplace(name, &m).second) throw CheckpointError("duplicate tensor '" + name + "'");
  }
  std::size_t used = 0;
  b.params.visit([&](const std::string& name, Param& p) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw CheckpointError(path.string() + ": missing tensor '" + name + "'");
    if (!it->second->same_shape(p.value)) {
      throw CheckpointError("tensor '" + name + "' has shape " + it->second->shape_str() + ", expected " +
                            p.value.shape_str());
    }
    p = Param(*it->second);
    ++used;
  });
  if (used != stored.size()) throw CheckpointError(path.string() + ": checkpoint holds unexpected tensors");
  return b;
}

}  // namespace getral
