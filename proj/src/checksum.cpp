#include "mrf/checksum.hpp"

#include <array>
#include <cstdio>

namespace mrf {

namespace {

constexpr std::uint64_t poly = 0xC96C5795D7870F42ull; // reflected ECMA-182

constexpr auto make_table() -> std::array<std::uint64_t, 256>
{
  std::array<std::uint64_t, 256> t{};
  for (std::uint64_t i = 0; i < 256; i++) {
    std::uint64_t c = i;
    for (int b = 0; b < 8; b++) {
      c = (c & 1) ? (c >> 1) ^ poly : c >> 1;
    }
    t[i] = c;
  }
  return t;
}

constexpr auto table = make_table();

} // namespace

void Crc64::update(std::span<std::uint8_t const> bytes)
{
  for (auto b : bytes) {
    state_ = table[(state_ ^ b) & 0xFF] ^ (state_ >> 8);
  }
}

void Crc64::update(std::string_view s)
{
  update(std::span{reinterpret_cast<std::uint8_t const *>(s.data()), s.size()});
}

auto crc64(std::span<std::uint8_t const> bytes) -> std::uint64_t
{
  Crc64 c;
  c.update(bytes);
  return c.value();
}

auto crc64(std::string_view s) -> std::uint64_t
{
  Crc64 c;
  c.update(s);
  return c.value();
}

auto hex(std::uint64_t v) -> std::string
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

} // namespace mrf
