// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout:
//   GATLLM-CHECKPOINT <version>\n
//   checksum crc32 <8 hex digits> length <bytes>\n     covers everything below
//   config <bytes>\n<config text>\n
//   params <count>\n
//   <name> <dim,dim,...> <offset> <bytes>\n           one line per tensor
//   payload <bytes>\n<raw little-endian doubles>

#include <zlib.h>

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gatllm/error.hpp"
#include "gatllm/forecaster.hpp"

namespace gatllm {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

constexpr const char* kMagic = "GATLLM-CHECKPOINT";
constexpr const char* kStatsMin = "normalization.min";
constexpr const char* kStatsMax = "normalization.max";

std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

struct Entry {
  std::string name;
  Shape shape;
  std::span<const double> values;
};

std::string shape_field(const Shape& shape) {
  if (shape.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(shape[i]);
  }
  return out;
}

Shape parse_shape(const std::string& field) {
  Shape shape;
  if (field == "-") return shape;
  std::stringstream ss(field);
  std::string part;
  while (std::getline(ss, part, ',')) shape.push_back(std::stoull(part));
  return shape;
}

/// Cursor over the checkpoint body.
class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::string line() {
    const auto nl = text_.find('\n', pos_);
    if (nl == std::string_view::npos) throw Error(ErrorCode::Format, "checkpoint: unexpected end of manifest");
    std::string out(text_.substr(pos_, nl - pos_));
    pos_ = nl + 1;
    return out;
  }

  std::string_view take(std::size_t n) {
    if (text_.size() - pos_ < n) throw Error(ErrorCode::Format, "checkpoint: section overruns the file");
    const auto out = text_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

std::size_t expect_count(const std::string& line, const std::string& keyword) {
  std::istringstream ss(line);
  std::string word;
  std::size_t n = 0;
  if (!(ss >> word >> n) || word != keyword) {
    throw Error(ErrorCode::Format, "checkpoint: expected '" + keyword + " <n>', got '" + line + "'");
  }
  return n;
}

}  // namespace

std::string checkpoint_bytes(const Forecaster& model) {
  std::vector<Entry> entries;
  for (const auto* p : model.parameters()) entries.push_back({p->name, p->value.shape(), p->value.data()});
  const auto& stats = model.stats();
  entries.push_back({kStatsMin, {stats.min.size()}, stats.min});
  entries.push_back({kStatsMax, {stats.max.size()}, stats.max});

  const std::string config = model.config().to_text();
  std::string body = "config " + std::to_string(config.size()) + "\n" + config + "\n";
  body += "params " + std::to_string(entries.size()) + "\n";
  std::size_t offset = 0;
  for (const auto& e : entries) {
    const std::size_t bytes = e.values.size() * sizeof(double);
    body += e.name + " " + shape_field(e.shape) + " " + std::to_string(offset) + " " + std::to_string(bytes) + "\n";
    offset += bytes;
  }
  body += "payload " + std::to_string(offset) + "\n";
  const std::size_t payload_at = body.size();
  body.resize(payload_at + offset);
  char* out = body.data() + payload_at;
  for (const auto& e : entries) {
    if (!e.values.empty()) std::memcpy(out, e.values.data(), e.values.size() * sizeof(double));
    out += e.values.size() * sizeof(double);
  }

  char header[96];
  std::snprintf(header, sizeof header, "%s %d\nchecksum crc32 %08" PRIx32 " length %zu\n", kMagic, kCheckpointFormat,
                crc32_of(body), body.size());
  return header + body;
}

void save_checkpoint(const Forecaster& model, const std::string& path) {
  const std::string bytes = checkpoint_bytes(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open checkpoint for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "failed writing checkpoint: " + path);
}

Forecaster parse_checkpoint(const std::string& bytes, const ForecasterConfig* expected) {
  Reader head(bytes);
  {
    std::istringstream ss(head.line());
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != kMagic) throw Error(ErrorCode::Format, "not a checkpoint file");
    if (version != kCheckpointFormat) {
      throw Error(ErrorCode::Version, "checkpoint format " + std::to_string(version) + ", this build reads " +
                                          std::to_string(kCheckpointFormat));
    }
  }
  std::uint32_t stored_crc = 0;
  std::size_t length = 0;
  {
    const std::string line = head.line();
    unsigned int crc = 0;
    if (std::sscanf(line.c_str(), "checksum crc32 %8x length %zu", &crc, &length) != 2) {
      throw Error(ErrorCode::Checksum, "checkpoint: missing checksum line");
    }
    stored_crc = crc;
  }
  const std::string_view body = std::string_view(bytes).substr(head.position());
  if (body.size() != length) {
    throw Error(ErrorCode::Checksum, "checkpoint: length " + std::to_string(body.size()) + " bytes, manifest says " +
                                         std::to_string(length) + " (truncated or padded)");
  }
  if (crc32_of(body) != stored_crc) throw Error(ErrorCode::Checksum, "checkpoint: checksum mismatch");

  Reader r(body);
  const std::string config_text(r.take(expect_count(r.line(), "config")));
  (void)r.line();
  if (expected && expected->to_text() != config_text) {
    throw Error(ErrorCode::ConfigMismatch, "checkpoint was written for a different model configuration");
  }
  Forecaster model(ForecasterConfig::from_text(config_text));

  struct Slot {
    std::string name;
    Shape shape;
    std::size_t offset;
    std::size_t bytes;
  };
  std::vector<Slot> slots(expect_count(r.line(), "params"));
  for (auto& s : slots) {
    std::istringstream ss(r.line());
    std::string shape;
    if (!(ss >> s.name >> shape >> s.offset >> s.bytes)) throw Error(ErrorCode::Format, "checkpoint: bad directory line");
    s.shape = parse_shape(shape);
  }
  const std::size_t payload_size = expect_count(r.line(), "payload");
  const std::string_view payload = r.take(payload_size);

  auto read_values = [&](const Slot& s) {
    if (s.offset + s.bytes > payload.size() || s.bytes % sizeof(double) != 0 ||
        s.bytes != shape_size(s.shape) * sizeof(double)) {
      throw Error(ErrorCode::Format, "checkpoint: inconsistent entry for " + s.name);
    }
    std::vector<double> v(s.bytes / sizeof(double));
    if (!v.empty()) std::memcpy(v.data(), payload.data() + s.offset, s.bytes);
    return v;
  };

  auto params = model.parameters();
  if (slots.size() != params.size() + 2) {
    throw Error(ErrorCode::ConfigMismatch, "checkpoint holds " + std::to_string(slots.size()) +
                                               " tensors, configuration implies " + std::to_string(params.size() + 2));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Slot& s = slots[i];
    if (s.name != params[i]->name || s.shape != params[i]->value.shape()) {
      throw Error(ErrorCode::ConfigMismatch, "checkpoint tensor " + s.name + " " + shape_string(s.shape) +
                                                 " does not match " + params[i]->name + " " +
                                                 shape_string(params[i]->value.shape()));
    }
    params[i]->value = Tensor(s.shape, read_values(s));
  }
  const Slot& smin = slots[params.size()];
  const Slot& smax = slots[params.size() + 1];
  if (smin.name != kStatsMin || smax.name != kStatsMax) throw Error(ErrorCode::Format, "checkpoint: stats missing");
  NormalizationStats stats{read_values(smin), read_values(smax)};
  if (stats.size() > 0) model.set_stats(std::move(stats));
  return model;
}

Forecaster load_checkpoint(const std::string& path, const ForecasterConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), expected);
}

}  // namespace gatllm
