#include "persist_trace/common.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace persist_trace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  return true;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> tokenize(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::optional<std::uint32_t> parse_ipv4(std::string_view ip) {
  std::uint32_t value = 0;
  int octets = 0;
  std::size_t pos = 0;
  while (octets < 4) {
    std::size_t end = ip.find('.', pos);
    std::string_view part =
        end == std::string_view::npos ? ip.substr(pos) : ip.substr(pos, end - pos);
    unsigned v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || p != part.data() + part.size() || v > 255) return std::nullopt;
    value = (value << 8) | v;
    ++octets;
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  if (octets != 4) return std::nullopt;
  return value;
}

std::optional<Cidr> Cidr::parse(std::string_view text) {
  std::size_t slash = text.find('/');
  std::string_view ip = slash == std::string_view::npos ? text : text.substr(0, slash);
  int bits = 32;
  if (slash != std::string_view::npos) {
    std::string_view mask = text.substr(slash + 1);
    auto [p, ec] = std::from_chars(mask.data(), mask.data() + mask.size(), bits);
    if (ec != std::errc() || p != mask.data() + mask.size() || bits < 0 || bits > 32)
      return std::nullopt;
  }
  auto addr = parse_ipv4(ip);
  if (!addr) return std::nullopt;
  Cidr c;
  c.addr = *addr;
  c.bits = bits;
  return c;
}

bool Cidr::contains(std::string_view ip) const {
  auto v = parse_ipv4(ip);
  if (!v) return false;
  if (bits == 0) return true;
  std::uint32_t mask = bits == 32 ? 0xffffffffu : ~((1u << (32 - bits)) - 1);
  return (*v & mask) == (addr & mask);
}

bool is_loopback_or_linklocal(std::string_view ip) {
  if (ip == "::1" || starts_with_ci(ip, "fe80:")) return true;
  auto v = parse_ipv4(ip);
  if (!v) return false;
  if ((*v >> 24) == 127) return true;
  return (*v >> 16) == ((169u << 8) | 254u);
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PERSIST_TRACE_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  workers = resolve_workers(workers);
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t stripe = static_cast<std::size_t>(workers);
  std::vector<std::thread> pool;
  pool.reserve(stripe);
  for (std::size_t w = 0; w < stripe; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += stripe) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace persist_trace
