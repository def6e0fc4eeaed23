#include "authaudit/feature_cache.hpp"

#include <numeric>

#include "authaudit/binary_io.hpp"

namespace authaudit {
namespace {

constexpr char kMagic[] = "AFC1";
constexpr std::uint32_t kVersion = 1;

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t d) { return a * d; });
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& cache_path) {
  auto p = cache_path;
  p += ".json";
  return p;
}

std::vector<std::uint8_t> encode_cache(const std::vector<CacheRecord>& records,
                                       std::map<std::string, std::uint64_t>* offsets) {
  ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.id.size() > 0xFFFF) throw FormatError("AFC1: id too long: " + r.id.substr(0, 32));
    if (r.dims.size() > 0xFF) throw FormatError("AFC1: too many dims");
    const std::size_t n = element_count(r.dims);
    const bool wide = r.kind == RecordKind::HeadTensor;
    if ((wide ? r.f64.size() : r.f32.size()) != n) throw FormatError("AFC1: payload does not match dims for " + r.id);
    if (offsets) (*offsets)[r.id] = w.size();
    w.u16(static_cast<std::uint16_t>(r.id.size()));
    w.raw(r.id);
    w.u8(static_cast<std::uint8_t>(r.kind));
    w.u8(static_cast<std::uint8_t>(r.dims.size()));
    for (const auto d : r.dims) w.u32(d);
    if (wide) {
      for (const double v : r.f64) w.f64(v);
    } else {
      for (const float v : r.f32) w.f32(v);
    }
  }
  return w.take();
}

std::vector<CacheRecord> decode_cache(std::span<const std::uint8_t> bytes,
                                      std::map<std::string, std::uint64_t>* offsets) {
  ByteReader r(bytes);
  if (r.str(4) != std::string_view(kMagic, 4)) throw FormatError("AFC1: bad magic");
  if (const auto v = r.u32(); v != kVersion) throw FormatError("AFC1: unsupported version " + std::to_string(v));
  const std::uint32_t count = r.u32();
  std::vector<CacheRecord> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t offset = r.position();
    CacheRecord rec;
    rec.id = r.str(r.u16());
    const auto kind = r.u8();
    if (kind > 2) throw FormatError("AFC1: unknown record kind " + std::to_string(kind));
    rec.kind = static_cast<RecordKind>(kind);
    rec.dims.resize(r.u8());
    for (auto& d : rec.dims) d = r.u32();
    const std::size_t n = element_count(rec.dims);
    if (rec.kind == RecordKind::HeadTensor) {
      rec.f64.resize(n);
      for (auto& v : rec.f64) v = r.f64();
    } else {
      rec.f32.resize(n);
      for (auto& v : rec.f32) v = r.f32();
    }
    if (offsets) (*offsets)[rec.id] = offset;
    out.push_back(std::move(rec));
  }
  if (!r.at_end()) throw FormatError("AFC1: trailing bytes after last record");
  return out;
}

void FeatureCacheWriter::add(CacheRecord record) {
  if (!index_.emplace(record.id, records_.size()).second) {
    throw std::invalid_argument("feature cache: duplicate id " + record.id);
  }
  records_.push_back(std::move(record));
}

void FeatureCacheWriter::add_embedding(const std::string& id, const Embedding& e) {
  add({id, RecordKind::Embedding, {static_cast<std::uint32_t>(e.size())}, e.values, {}});
}

void FeatureCacheWriter::add_featmaps(const std::string& id, const FeatureMapTensor& t) {
  add({id,
       RecordKind::FeatureMaps,
       {static_cast<std::uint32_t>(t.channels), static_cast<std::uint32_t>(t.height),
        static_cast<std::uint32_t>(t.width)},
       t.data,
       {}});
}

void FeatureCacheWriter::write(const std::filesystem::path& path) const {
  std::map<std::string, std::uint64_t> offsets;
  write_file(path, encode_cache(records_, &offsets));
  nlohmann::json manifest{{"format", "AFC1"},
                          {"version", kVersion},
                          {"file", path.filename().string()},
                          {"records", offsets}};
  write_text(manifest_path(path), manifest.dump(1));
}

FeatureCache FeatureCache::open(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::map<std::string, std::uint64_t> offsets;
  FeatureCache cache = from_records(decode_cache(bytes, &offsets));
  const auto mpath = manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    const auto manifest = nlohmann::json::parse(read_text(mpath));
    const auto listed = manifest.at("records").get<std::map<std::string, std::uint64_t>>();
    if (listed != offsets) throw FormatError("AFC1 manifest does not match record offsets in " + path.string());
  }
  return cache;
}

FeatureCache FeatureCache::from_records(std::vector<CacheRecord> records) {
  FeatureCache cache;
  cache.records_ = std::move(records);
  for (std::size_t i = 0; i < cache.records_.size(); ++i) {
    if (!cache.index_.emplace(cache.records_[i].id, i).second) {
      throw FormatError("AFC1: duplicate id " + cache.records_[i].id);
    }
  }
  return cache;
}

const CacheRecord& FeatureCache::record(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("feature cache has no record " + id);
  return records_[it->second];
}

Embedding FeatureCache::embedding(const std::string& id) const {
  const auto& r = record(id);
  if (r.kind != RecordKind::Embedding) throw FormatError("record " + id + " is not an embedding");
  return {r.f32};
}

FeatureMapTensor FeatureCache::featmaps(const std::string& id) const {
  const auto& r = record(id);
  if (r.kind != RecordKind::FeatureMaps || r.dims.size() != 3) {
    throw FormatError("record " + id + " is not a C x H x W feature map");
  }
  Tensor3 t(static_cast<int>(r.dims[0]), static_cast<int>(r.dims[1]), static_cast<int>(r.dims[2]));
  t.data = r.f32;
  return t;
}

std::vector<std::string> FeatureCache::ids() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

}  // namespace authaudit
