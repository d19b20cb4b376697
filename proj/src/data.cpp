#include "sbr/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace sbr::data {

namespace {

constexpr int64_t kMsPerDay = 86400000;

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int64_t yoe = y - era * 400;
  const int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      parts.push_back(line.substr(start));
      break;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::string format_name(Format f) {
  return f == Format::yoochoose ? "yoochoose" : "diginetica";
}

std::optional<Format> format_from_name(const std::string& name) {
  if (name == "yoochoose") return Format::yoochoose;
  if (name == "diginetica") return Format::diginetica;
  return std::nullopt;
}

std::optional<int64_t> parse_date_ms(const std::string& s) {
  int y = 0, m = 0, d = 0;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3) {
    return std::nullopt;
  }
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  return days_from_civil(y, m, d) * kMsPerDay;
}

std::optional<int64_t> parse_iso8601_ms(const std::string& s) {
  // YYYY-MM-DDTHH:MM:SS[.fff][Z]
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (s.size() < 19) return std::nullopt;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d", &y, &mo, &d, &h, &mi, &sec) != 6) {
    return std::nullopt;
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) {
    return std::nullopt;
  }
  int64_t ms = 0;
  size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      if (digits < 3) ms = ms * 10 + (s[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    while (digits < 3) {
      ms *= 10;
      ++digits;
    }
  }
  if (pos < s.size() && s[pos] != 'Z') return std::nullopt;
  int64_t days = days_from_civil(y, mo, d);
  return ((days * 24 + h) * 60 + mi) * 60000 + sec * 1000 + ms;
}

ParseResult parse_events_stream(std::istream& in, Format format) {
  ParseResult result;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    ++line_no;
    if (line.empty()) continue;
    if (format == Format::yoochoose) {
      auto f = split(line, ',');
      if (f.size() < 3 || f[0].empty() || f[2].empty()) {
        ++result.skipped;
        continue;
      }
      auto ts = parse_iso8601_ms(f[1]);
      if (!ts) {
        ++result.skipped;
        continue;
      }
      result.events.push_back({f[0], *ts, *ts, f[2]});
    } else {
      auto f = split(line, ';');
      // header row: sessionId;userId;itemId;timeframe;eventdate
      if (line_no == 1 && !f.empty() && !all_digits(f[0])) continue;
      if (f.size() < 5 || f[0].empty() || f[2].empty()) {
        ++result.skipped;
        continue;
      }
      if (!all_digits(f[3])) {
        ++result.skipped;
        continue;
      }
      auto date = parse_date_ms(f[4]);
      if (!date) {
        ++result.skipped;
        continue;
      }
      result.events.push_back({f[0], *date, std::stoll(f[3]), f[2]});
    }
  }
  return result;
}

ParseResult parse_events(const std::string& path, Format format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file: " + path);
  return parse_events_stream(in, format);
}

std::pair<std::vector<Session>, Vocabulary> sessionize_and_filter(
    const std::vector<RawEvent>& events, const FilterOptions& options) {
  struct Ev {
    int64_t order_key;
    size_t file_idx;
    int64_t ts;
    int32_t item;
  };
  struct Group {
    std::string id;
    std::vector<Ev> events;
  };

  // Temporary dense item ids for the filter loop.
  std::vector<std::string> temp_names;
  std::unordered_map<std::string, int32_t> temp_ids;
  std::vector<Group> groups;
  std::unordered_map<std::string, size_t> group_of;
  for (size_t i = 0; i < events.size(); ++i) {
    const RawEvent& e = events[i];
    auto [git, ginserted] = group_of.try_emplace(e.session_id, groups.size());
    if (ginserted) groups.push_back({e.session_id, {}});
    auto [iit, iinserted] = temp_ids.try_emplace(e.item_id, static_cast<int32_t>(temp_names.size()));
    if (iinserted) temp_names.push_back(e.item_id);
    groups[git->second].events.push_back({e.order_key, i, e.timestamp_ms, iit->second});
  }

  for (auto& g : groups) {
    std::stable_sort(g.events.begin(), g.events.end(),
                     [](const Ev& a, const Ev& b) { return a.order_key < b.order_key; });
  }

  struct Work {
    std::string id;
    std::vector<int32_t> items;
    int64_t end_time = 0;
  };
  std::vector<Work> work;
  work.reserve(groups.size());
  for (auto& g : groups) {
    Work w;
    w.id = g.id;
    for (const Ev& e : g.events) {
      w.items.push_back(e.item);
      w.end_time = std::max(w.end_time, e.ts);
    }
    work.push_back(std::move(w));
  }

  // Fixpoint: removing rare items can create short sessions whose removal
  // lowers other item counts, so iterate until stable.
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<int32_t, int64_t> counts;
    for (const Work& w : work) {
      if (options.count_before_ms && w.end_time >= *options.count_before_ms) continue;
      for (int32_t item : w.items) ++counts[item];
    }
    for (Work& w : work) {
      size_t before = w.items.size();
      std::erase_if(w.items, [&](int32_t item) {
        auto it = counts.find(item);
        return it == counts.end() || it->second < options.min_item_count;
      });
      if (w.items.size() != before) {
        changed = true;
        // end time tracks the retained events
        w.end_time = 0;
        size_t kept = 0;
        for (const Ev& e : groups[group_of.at(w.id)].events) {
          auto cit = counts.find(e.item);
          if (cit != counts.end() && cit->second >= options.min_item_count) {
            w.end_time = std::max(w.end_time, e.ts);
            ++kept;
          }
        }
        (void)kept;
      }
    }
    size_t before = work.size();
    std::erase_if(work, [&](const Work& w) {
      return static_cast<int>(w.items.size()) < options.min_session_len;
    });
    if (work.size() != before) changed = true;
  }

  Vocabulary vocab;
  std::vector<Session> sessions;
  sessions.reserve(work.size());
  for (const Work& w : work) {
    Session s;
    s.id = w.id;
    s.end_time_ms = w.end_time;
    s.items.reserve(w.items.size());
    for (int32_t t : w.items) s.items.push_back(vocab.add(temp_names[t]));
    sessions.push_back(std::move(s));
  }
  return {std::move(sessions), std::move(vocab)};
}

SplitResult split_by_time(const std::vector<Session>& sessions, int test_window_days) {
  if (sessions.empty()) throw ConfigError("split_by_time: no sessions to split");
  if (test_window_days < 1) throw ConfigError("split_by_time: window must be >= 1 day");
  int64_t last_day = 0;
  bool first = true;
  for (const Session& s : sessions) {
    int64_t day = s.end_time_ms / kMsPerDay;
    last_day = first ? day : std::max(last_day, day);
    first = false;
  }
  const int64_t boundary_day = last_day - (test_window_days - 1);

  SplitResult result;
  result.boundary_ms = boundary_day * kMsPerDay;
  for (const Session& s : sessions) {
    if (s.end_time_ms / kMsPerDay >= boundary_day) {
      result.test.push_back(s);
    } else {
      result.train.push_back(s);
    }
  }
  if (result.train.empty()) {
    throw ConfigError("split_by_time: training split is empty (all sessions in the test window)");
  }
  if (result.test.empty()) throw ConfigError("split_by_time: test split is empty");
  return result;
}

std::vector<Session> take_recent_fraction(std::vector<Session> sessions, uint32_t num,
                                          uint32_t den) {
  if (den == 0 || num == 0 || num > den) {
    throw ConfigError("take_recent_fraction: fraction must satisfy 0 < num/den <= 1");
  }
  if (num == den) return sessions;
  std::stable_sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) {
    if (a.end_time_ms != b.end_time_ms) return a.end_time_ms < b.end_time_ms;
    return a.id < b.id;
  });
  size_t keep = std::max<size_t>(1, sessions.size() * num / den);
  sessions.erase(sessions.begin(), sessions.end() - static_cast<ptrdiff_t>(keep));
  return sessions;
}

Vocabulary rebuild_vocab_from_train(std::vector<Session>& train, const Vocabulary& full) {
  Vocabulary vocab;
  for (Session& s : train) {
    for (int32_t& item : s.items) item = vocab.add(full.decode(item));
  }
  return vocab;
}

std::vector<Session> filter_test_items(const std::vector<Session>& test,
                                       const Vocabulary& train_vocab, const Vocabulary& full) {
  std::vector<Session> out;
  out.reserve(test.size());
  for (const Session& s : test) {
    Session mapped;
    mapped.id = s.id;
    mapped.end_time_ms = s.end_time_ms;
    for (int32_t item : s.items) {
      int32_t idx = train_vocab.encode(full.decode(item));
      if (idx != 0) mapped.items.push_back(idx);
    }
    if (static_cast<int>(mapped.items.size()) >= 2) out.push_back(std::move(mapped));
  }
  return out;
}

std::vector<LabeledExample> expand_prefixes(const Session& session) {
  if (session.items.size() < 2) {
    throw ContractError("expand_prefixes: session shorter than 2 items");
  }
  std::vector<LabeledExample> out;
  out.reserve(session.items.size() - 1);
  for (size_t t = 1; t < session.items.size(); ++t) {
    LabeledExample ex;
    ex.prefix.assign(session.items.begin(), session.items.begin() + static_cast<ptrdiff_t>(t));
    ex.label = session.items[t];
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<LabeledExample> expand_prefixes(const std::vector<Session>& sessions) {
  std::vector<LabeledExample> out;
  for (const Session& s : sessions) {
    auto ex = expand_prefixes(s);
    out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  return out;
}

PreprocessedData run_preprocess(const std::string& input_path, const PreprocessOptions& options) {
  if (options.format == Format::diginetica && options.fraction_den != options.fraction_num) {
    throw ConfigError("recent-fraction subsetting applies to yoochoose only");
  }
  const int window = options.test_window_days > 0
                         ? options.test_window_days
                         : (options.format == Format::yoochoose ? 1 : 7);

  ParseResult parsed = parse_events(input_path, options.format);

  FilterOptions filter = options.filter;
  if (options.count_items_on_train_only) {
    // Provisional boundary over the unfiltered log to restrict counting.
    FilterOptions nofilter;
    nofilter.min_item_count = 0;
    nofilter.min_session_len = 1;
    auto [raw_sessions, raw_vocab] = sessionize_and_filter(parsed.events, nofilter);
    filter.count_before_ms = split_by_time(raw_sessions, window).boundary_ms;
  }

  auto [sessions, full_vocab] = sessionize_and_filter(parsed.events, filter);
  if (sessions.empty()) throw ConfigError("preprocess: no sessions survive filtering");

  SplitResult splits = split_by_time(sessions, window);
  if (options.format == Format::yoochoose) {
    splits.train = take_recent_fraction(std::move(splits.train), options.fraction_num,
                                        options.fraction_den);
  }

  PreprocessedData out;
  out.dataset = format_name(options.format);
  out.parse_warnings = parsed.skipped;
  out.vocab = rebuild_vocab_from_train(splits.train, full_vocab);
  out.train = std::move(splits.train);
  out.test = filter_test_items(splits.test, out.vocab, full_vocab);

  Stats& st = out.stats;
  st.dataset = out.dataset;
  for (const Session& s : out.train) st.clicks += static_cast<int64_t>(s.items.size());
  for (const Session& s : out.test) st.clicks += static_cast<int64_t>(s.items.size());
  st.sessions = static_cast<int64_t>(out.train.size() + out.test.size());
  for (const Session& s : out.train) st.train_sessions += static_cast<int64_t>(s.items.size()) - 1;
  for (const Session& s : out.test) st.test_sessions += static_cast<int64_t>(s.items.size()) - 1;
  st.total_items = out.vocab.item_count();
  st.avg_length = st.sessions == 0 ? 0.0
                                   : static_cast<double>(st.clicks) / static_cast<double>(st.sessions);
  return out;
}

}  // namespace sbr::data
