#pragma once

#include <string>

#include "sbr/data.hpp"

namespace sbr::data {

// Versioned binary session cache, magic "SBR1", little-endian 32-bit item
// indices. Training never re-parses raw logs.
void write_sessions_bin(const std::string& path, const PreprocessedData& data);
PreprocessedData read_sessions_bin(const std::string& path);

std::string stats_to_json(const Stats& stats);
void write_stats_json(const std::string& path, const Stats& stats);

// FNV-1a over the file bytes, for run-directory provenance records.
uint64_t file_fingerprint(const std::string& path);

}  // namespace sbr::data
