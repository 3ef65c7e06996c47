#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace persist_trace {

using TimeMs = std::int64_t;

// Minimal expected-type: parse paths report errors as values so the caller
// chooses between skipping (lenient) and aborting (strict).
template <typename T, typename E>
class Expected {
public:
  Expected(T value) : v_(std::move(value)) {}
  Expected(E error) : v_(std::move(error)) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() { return std::get<T>(v_); }
  const T& value() const { return std::get<T>(v_); }
  const E& error() const { return std::get<E>(v_); }

private:
  std::variant<T, E> v_;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RuleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
std::vector<std::string> split(std::string_view s, char sep);

// Whitespace-token helpers used by capture transforms.
std::vector<std::string_view> tokenize(std::string_view s);

// IPv4 CIDR; used for loopback/link-local exclusion and the internal-range
// classification. Non-IPv4 strings never match.
struct Cidr {
  std::uint32_t addr = 0;
  int bits = 0;

  static std::optional<Cidr> parse(std::string_view text);
  bool contains(std::string_view ip) const;
};

std::optional<std::uint32_t> parse_ipv4(std::string_view ip);
bool is_loopback_or_linklocal(std::string_view ip);

// Worker count: explicit argument wins, else PERSIST_TRACE_THREADS, else 1.
int resolve_workers(int requested);

// Runs fn(i) for i in [0, n) on `workers` threads. Work is assigned by index
// so any per-index output is independent of the worker count.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace persist_trace
