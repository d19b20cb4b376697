#include "sbr/io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace sbr::data {

namespace {

constexpr char kMagic[4] = {'S', 'B', 'R', '1'};

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_i64(std::ostream& out, int64_t v) {
  auto u = static_cast<uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("session cache truncated");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

int64_t get_i64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("session cache truncated");
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  return static_cast<int64_t>(u);
}

std::string get_str(std::istream& in) {
  uint32_t n = get_u32(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw IoError("session cache truncated");
  return s;
}

void put_sessions(std::ostream& out, const std::vector<Session>& sessions) {
  put_u32(out, static_cast<uint32_t>(sessions.size()));
  for (const Session& s : sessions) {
    put_str(out, s.id);
    put_i64(out, s.end_time_ms);
    put_u32(out, static_cast<uint32_t>(s.items.size()));
    for (int32_t item : s.items) put_u32(out, static_cast<uint32_t>(item));
  }
}

std::vector<Session> get_sessions(std::istream& in) {
  uint32_t n = get_u32(in);
  std::vector<Session> out(n);
  for (Session& s : out) {
    s.id = get_str(in);
    s.end_time_ms = get_i64(in);
    uint32_t len = get_u32(in);
    s.items.resize(len);
    for (int32_t& item : s.items) item = static_cast<int32_t>(get_u32(in));
  }
  return out;
}

}  // namespace

void write_sessions_bin(const std::string& path, const PreprocessedData& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write session cache: " + path);
  out.write(kMagic, 4);
  put_str(out, data.dataset);
  put_u32(out, static_cast<uint32_t>(data.vocab.item_count()));
  for (int32_t i = 1; i <= data.vocab.item_count(); ++i) put_str(out, data.vocab.decode(i));
  put_sessions(out, data.train);
  put_sessions(out, data.test);
  if (!out) throw IoError("write failed: " + path);
}

PreprocessedData read_sessions_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open session cache: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a session cache (bad magic): " + path);
  }
  PreprocessedData data;
  data.dataset = get_str(in);
  uint32_t items = get_u32(in);
  for (uint32_t i = 0; i < items; ++i) data.vocab.add(get_str(in));
  data.train = get_sessions(in);
  data.test = get_sessions(in);

  Stats& st = data.stats;
  st.dataset = data.dataset;
  for (const Session& s : data.train) st.clicks += static_cast<int64_t>(s.items.size());
  for (const Session& s : data.test) st.clicks += static_cast<int64_t>(s.items.size());
  st.sessions = static_cast<int64_t>(data.train.size() + data.test.size());
  for (const Session& s : data.train) st.train_sessions += static_cast<int64_t>(s.items.size()) - 1;
  for (const Session& s : data.test) st.test_sessions += static_cast<int64_t>(s.items.size()) - 1;
  st.total_items = data.vocab.item_count();
  st.avg_length =
      st.sessions == 0 ? 0.0 : static_cast<double>(st.clicks) / static_cast<double>(st.sessions);
  return data;
}

std::string stats_to_json(const Stats& stats) {
  nlohmann::json j;
  j["dataset"] = stats.dataset;
  j["clicks"] = stats.clicks;
  j["sessions"] = stats.sessions;
  j["train_sessions"] = stats.train_sessions;
  j["test_sessions"] = stats.test_sessions;
  j["total_items"] = stats.total_items;
  j["avg_length"] = stats.avg_length;
  return j.dump(2) + "\n";
}

void write_stats_json(const std::string& path, const Stats& stats) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write stats file: " + path);
  out << stats_to_json(stats);
}

uint64_t file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for fingerprint: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  return h;
}

}  // namespace sbr::data
