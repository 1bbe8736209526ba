#pragma once

#include <cstddef>
#include <string>

namespace dbm {

/// Idempotent libsodium initialization; called by everything below.
void ensure_sodium();

/// Uniform draw over [A-Za-z0-9] from the OS CSPRNG (libsodium).
std::string random_alnum(std::size_t length);

/// Lowercase hex of `bytes` random bytes.
std::string random_hex(std::size_t bytes);

}  // namespace dbm
