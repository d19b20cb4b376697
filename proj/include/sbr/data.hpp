#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sbr/errors.hpp"

namespace sbr::data {

enum class Format { yoochoose, diginetica };

std::string format_name(Format f);
std::optional<Format> format_from_name(const std::string& name);

struct RawEvent {
  std::string session_id;
  int64_t timestamp_ms = 0;  // epoch milliseconds, UTC
  int64_t order_key = 0;     // within-session ordering key
  std::string item_id;
};

struct ParseResult {
  std::vector<RawEvent> events;
  size_t skipped = 0;  // malformed rows counted as warnings
};

// yoochoose: no header, `session_id,timestamp,item_id,category`, ISO-8601
// timestamps. diginetica: header `sessionId;userId;itemId;timeframe;eventdate`.
ParseResult parse_events(const std::string& path, Format format);
ParseResult parse_events_stream(std::istream& in, Format format);

// Epoch milliseconds for an ISO-8601 UTC instant like 2014-04-07T10:51:09.277Z;
// nullopt on malformed input.
std::optional<int64_t> parse_iso8601_ms(const std::string& text);
std::optional<int64_t> parse_date_ms(const std::string& yyyy_mm_dd);

struct Session {
  std::string id;
  std::vector<int32_t> items;  // internal indices, never 0
  int64_t end_time_ms = 0;
};

// Bidirectional item map. Index 0 is reserved for padding and maps to "".
struct Vocabulary {
  std::vector<std::string> index_to_id{""};
  std::unordered_map<std::string, int32_t> id_to_index;

  int32_t item_count() const { return static_cast<int32_t>(index_to_id.size()) - 1; }

  int32_t add(const std::string& id) {
    auto [it, inserted] = id_to_index.try_emplace(id, static_cast<int32_t>(index_to_id.size()));
    if (inserted) index_to_id.push_back(id);
    return it->second;
  }

  // 0 when the id is not retained.
  int32_t encode(const std::string& id) const {
    auto it = id_to_index.find(id);
    return it == id_to_index.end() ? 0 : it->second;
  }

  const std::string& decode(int32_t index) const {
    if (index < 0 || index >= static_cast<int32_t>(index_to_id.size())) {
      throw IndexError("vocabulary: index " + std::to_string(index) + " out of range");
    }
    return index_to_id[index];
  }
};

struct FilterOptions {
  int min_item_count = 5;
  int min_session_len = 2;
  // When set, item occurrences are counted only over sessions ending strictly
  // before this epoch-ms boundary (train-only counting).
  std::optional<int64_t> count_before_ms;
};

// Group events by session id, order each session by (order_key, file order),
// then iterate the two filter rules to fixpoint: drop items occurring fewer
// than min_item_count times, drop sessions shorter than min_session_len.
// Items are encoded against the returned full-log vocabulary.
std::pair<std::vector<Session>, Vocabulary> sessionize_and_filter(
    const std::vector<RawEvent>& events, const FilterOptions& options = {});

struct SplitResult {
  std::vector<Session> train;
  std::vector<Session> test;
  int64_t boundary_ms = 0;  // first test day, UTC midnight
};

// Sessions ending within the final `test_window_days` UTC calendar days of
// the log become the test set. Either side empty is a config error.
SplitResult split_by_time(const std::vector<Session>& sessions, int test_window_days);

// Keep only the most recent num/den fraction of sessions by end time
// (at least one session). Order within the result stays chronological.
std::vector<Session> take_recent_fraction(std::vector<Session> sessions, uint32_t num,
                                          uint32_t den);

// Rebuild the vocabulary from the training split only (first-occurrence
// order) and remap train sessions in place.
Vocabulary rebuild_vocab_from_train(std::vector<Session>& train, const Vocabulary& full);

// Drop test items absent from the training vocabulary, remap the survivors,
// and drop test sessions that shrink below length 2.
std::vector<Session> filter_test_items(const std::vector<Session>& test,
                                       const Vocabulary& train_vocab,
                                       const Vocabulary& full);

struct LabeledExample {
  std::vector<int32_t> prefix;
  int32_t label = 0;
};

// A session of length n yields n-1 examples ([x_0..x_{t-1}], x_t).
std::vector<LabeledExample> expand_prefixes(const Session& session);
std::vector<LabeledExample> expand_prefixes(const std::vector<Session>& sessions);

struct Stats {
  std::string dataset;
  int64_t clicks = 0;            // events surviving the filter fixpoint
  int64_t sessions = 0;          // sessions surviving the filter fixpoint
  int64_t train_sessions = 0;    // training examples after prefix expansion
  int64_t test_sessions = 0;     // test examples after prefix expansion
  int64_t total_items = 0;       // training vocabulary size
  double avg_length = 0.0;       // clicks / sessions
};

struct PreprocessOptions {
  Format format = Format::yoochoose;
  FilterOptions filter;
  int test_window_days = 0;  // 0 = per-format default (yoochoose 1, diginetica 7)
  uint32_t fraction_num = 1;
  uint32_t fraction_den = 1;
  bool count_items_on_train_only = false;
};

struct PreprocessedData {
  std::string dataset;
  Vocabulary vocab;
  std::vector<Session> train;
  std::vector<Session> test;
  Stats stats;
  size_t parse_warnings = 0;
};

// Full pipeline: parse, sessionize + filter, time split, optional recent
// fraction, train-only vocabulary, test purity filter, statistics.
PreprocessedData run_preprocess(const std::string& input_path, const PreprocessOptions& options);

}  // namespace sbr::data
