#include <zlib.h>

#include <bit>
#include <cstring>
#include <json.hpp>

#include "laygen/config_json.hpp"
#include "laygen/errors.hpp"
#include "laygen/io.hpp"
#include "laygen/train.hpp"

namespace laygen {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'Y', 'T'};
constexpr std::size_t kPreambleSize = 4 + 4 + 8;
constexpr std::size_t kCrcSize = 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, bytes.data() + pos, chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

struct Blob {
  std::string name;
  Shape shape;
  std::span<const float> values;
};

}  // namespace

Checkpoint Checkpoint::from_model(const Transformer& model, const CategoryVocab& categories) {
  Checkpoint ck;
  ck.model = model.config();
  ck.categories = categories;
  for (const auto& [name, t] : model.named_parameters()) ck.tensors.emplace_back(name, t.detach());
  return ck;
}

Transformer Checkpoint::to_model() const {
  // Start from a correctly shaped model, then overwrite every tensor.
  Transformer model(this->model, 0);
  auto named = model.named_parameters();
  if (named.size() != tensors.size()) {
    throw IncompatibleCheckpoint("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                                 std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, dst] = named[i];
    const auto& [src_name, src] = tensors[i];
    if (name != src_name || dst.shape() != src.shape()) {
      throw IncompatibleCheckpoint("tensor '" + src_name + "' " + shape_str(src.shape()) + " does not match '" +
                                   name + "' " + shape_str(dst.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
  }
  return model;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  std::vector<Blob> blobs;
  for (const auto& [name, t] : ck.tensors) blobs.push_back({name, t.shape(), t.data()});
  if (ck.optimizer) {
    const auto& st = *ck.optimizer;
    if (st.first_moment.size() == ck.tensors.size()) {
      for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
        blobs.push_back({"adam.m." + ck.tensors[i].first, ck.tensors[i].second.shape(), st.first_moment[i]});
        blobs.push_back({"adam.v." + ck.tensors[i].first, ck.tensors[i].second.shape(), st.second_moment[i]});
      }
    }
  }

  nlohmann::json header;
  header["format"] = "slyt";
  header["model"] = ck.model;
  header["categories"] = ck.categories.names();
  header["global_step"] = ck.global_step;
  header["epoch"] = ck.epoch;
  header["log"] = ck.log;
  if (ck.train) header["train"] = *ck.train;
  if (ck.optimizer) {
    const auto& c = ck.optimizer->config;
    header["optimizer"] = {{"step", ck.optimizer->step},
                           {"lr", c.lr},
                           {"beta1", c.beta1},
                           {"beta2", c.beta2},
                           {"eps", c.eps},
                           {"has_moments", !ck.optimizer->first_moment.empty()}};
  }
  auto& dir = header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& b : blobs) {
    if (shape_numel(b.shape) != b.values.size()) {
      throw ShapeError("tensor '" + b.name + "' has " + std::to_string(b.values.size()) + " values for shape " +
                       shape_str(b.shape));
    }
    dir.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}, {"count", b.values.size()}});
    offset += b.values.size();
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPreambleSize + text.size() + offset * 4 + kCrcSize);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, Checkpoint::kVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : blobs) {
    for (float v : b.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u32(out, crc32_of(out));
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IncompatibleCheckpoint("missing SLYT magic");
  }
  if (bytes.size() < kPreambleSize + kCrcSize) throw ChecksumError("file truncated");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != Checkpoint::kVersion) {
    throw IncompatibleCheckpoint("format version " + std::to_string(version) + ", expected " +
                                 std::to_string(Checkpoint::kVersion));
  }
  const std::size_t body = bytes.size() - kCrcSize;
  if (crc32_of(bytes.first(body)) != get_u32(bytes, body)) throw ChecksumError("CRC32 mismatch");
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > body - kPreambleSize) throw ChecksumError("header length exceeds file size");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreambleSize,
                                   bytes.begin() + static_cast<long>(kPreambleSize + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError(std::string("unreadable header: ") + e.what());
  }
  const std::size_t blob_start = kPreambleSize + header_len;
  const std::size_t blob_floats = (body - blob_start) / 4;

  Checkpoint ck;
  ck.model = header.at("model").get<ModelConfig>();
  ck.categories = CategoryVocab(header.at("categories").get<std::vector<std::string>>());
  ck.global_step = header.value("global_step", std::uint64_t{0});
  ck.epoch = header.value("epoch", 0);
  if (header.contains("log")) ck.log = header.at("log").get<std::vector<EpochLog>>();
  if (header.contains("train")) ck.train = header.at("train").get<TrainConfig>();

  std::vector<std::pair<std::string, Tensor>> all;
  for (const auto& entry : header.at("tensors")) {
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    auto shape = entry.at("shape").get<Shape>();
    if (offset + count > blob_floats || shape_numel(shape) != count) {
      throw ChecksumError("tensor '" + entry.at("name").get<std::string>() + "' lies outside the blob");
    }
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = std::bit_cast<float>(get_u32(bytes, blob_start + 4 * (offset + i)));
    }
    all.emplace_back(entry.at("name").get<std::string>(), Tensor::from(std::move(shape), std::move(values)));
  }

  std::vector<std::vector<float>> first, second;
  for (auto& [name, t] : all) {
    if (name.rfind("adam.m.", 0) == 0) {
      first.emplace_back(t.data().begin(), t.data().end());
    } else if (name.rfind("adam.v.", 0) == 0) {
      second.emplace_back(t.data().begin(), t.data().end());
    } else {
      ck.tensors.emplace_back(name, t.set_requires_grad(true));
    }
  }
  if (header.contains("optimizer")) {
    const auto& o = header.at("optimizer");
    AdamState st;
    st.step = o.at("step").get<std::uint64_t>();
    st.config = AdamConfig{o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                           o.at("eps").get<double>()};
    st.first_moment = std::move(first);
    st.second_moment = std::move(second);
    ck.optimizer = std::move(st);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = serialize_checkpoint(checkpoint);
  write_file_atomic(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file_bytes(path)); }

}  // namespace laygen
