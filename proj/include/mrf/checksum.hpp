#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace mrf {

/// CRC-64/XZ (ECMA-182 polynomial, reflected, init and xorout all ones).
class Crc64
{
public:
  void update(std::span<std::uint8_t const> bytes);
  void update(std::string_view s);
  auto value() const -> std::uint64_t { return ~state_; }

private:
  std::uint64_t state_ = ~std::uint64_t{0};
};

auto crc64(std::span<std::uint8_t const> bytes) -> std::uint64_t;
auto crc64(std::string_view s) -> std::uint64_t;

auto hex(std::uint64_t v) -> std::string;

} // namespace mrf
