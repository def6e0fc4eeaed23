#pragma once

// AFC1 binary container for embeddings, feature maps and head parameters.
//
//   "AFC1" | u32 version = 1 | u32 record count
//   per record: u16 id length | id bytes (UTF-8) | u8 kind | u8 dim count |
//               u32 dims... | payload
//
// All integers little-endian. Payload is f32 for kinds 0 (embedding) and 1
// (feature maps) and f64 for kind 2 (head tensors), product(dims) values.
// A JSON manifest next to the file (<file>.json) maps id -> record offset.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "authaudit/oracle.hpp"

namespace authaudit {

enum class RecordKind : std::uint8_t { Embedding = 0, FeatureMaps = 1, HeadTensor = 2 };

struct CacheRecord {
  std::string id;
  RecordKind kind = RecordKind::Embedding;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;   // kinds 0 and 1
  std::vector<double> f64;  // kind 2
};

std::vector<std::uint8_t> encode_cache(const std::vector<CacheRecord>& records,
                                       std::map<std::string, std::uint64_t>* offsets = nullptr);
std::vector<CacheRecord> decode_cache(std::span<const std::uint8_t> bytes,
                                      std::map<std::string, std::uint64_t>* offsets = nullptr);

class FeatureCacheWriter {
 public:
  void add(CacheRecord record);
  void add_embedding(const std::string& id, const Embedding& e);
  void add_featmaps(const std::string& id, const FeatureMapTensor& t);
  std::size_t size() const { return records_.size(); }
  // Writes the container and its manifest.
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<CacheRecord> records_;
  std::map<std::string, std::size_t> index_;
};

// Immutable after open(); concurrent readers need no locking.
class FeatureCache {
 public:
  static FeatureCache open(const std::filesystem::path& path);
  static FeatureCache from_records(std::vector<CacheRecord> records);

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const CacheRecord& record(const std::string& id) const;
  Embedding embedding(const std::string& id) const;
  FeatureMapTensor featmaps(const std::string& id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<CacheRecord> records_;
  std::map<std::string, std::size_t> index_;
};

std::filesystem::path manifest_path(const std::filesystem::path& cache_path);

}  // namespace authaudit
