#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbm::dyndns::wire {

inline constexpr std::uint16_t kTypeA = 1;
inline constexpr std::uint16_t kTypeAAAA = 28;
inline constexpr std::uint16_t kTypeANY = 255;
inline constexpr std::uint16_t kClassIN = 1;
inline constexpr std::uint16_t kClassANY = 255;

enum class Rcode : std::uint8_t {
  NoError = 0,
  FormErr = 1,
  ServFail = 2,
  NxDomain = 3,
  NotImp = 4,
  Refused = 5,
};

struct Header {
  std::uint16_t id = 0;
  bool qr = false;
  std::uint8_t opcode = 0;
  bool aa = false;
  bool tc = false;
  bool rd = false;
  bool ra = false;
  std::uint8_t z = 0;
  Rcode rcode = Rcode::NoError;
  std::uint16_t qdcount = 0;
  std::uint16_t ancount = 0;
  std::uint16_t nscount = 0;
  std::uint16_t arcount = 0;
};

struct Question {
  std::string name;  // dotted, no trailing dot, case as received
  std::uint16_t qtype = kTypeA;
  std::uint16_t qclass = kClassIN;
};

struct ResourceRecord {
  std::string name;
  std::uint16_t type = kTypeA;
  std::uint16_t rclass = kClassIN;
  std::uint32_t ttl = 0;
  std::vector<std::uint8_t> rdata;
};

struct Message {
  Header header;
  std::vector<Question> questions;
  std::vector<ResourceRecord> answers;
  std::vector<ResourceRecord> authority;
  std::vector<ResourceRecord> additional;
};

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header-only decode; nullopt when shorter than 12 bytes.
std::optional<Header> decode_header(std::span<const std::uint8_t> packet);
/// Full decode; follows compression pointers. Throws WireError.
Message decode(std::span<const std::uint8_t> packet);
/// Encodes without name compression; counts are taken from the vectors.
std::vector<std::uint8_t> encode(const Message& msg);

std::vector<std::uint8_t> make_query(std::uint16_t id, const std::string& name,
                                     std::uint16_t qtype, bool recursion_desired = true);

/// A-record RDATA from a dotted quad; throws std::invalid_argument.
std::vector<std::uint8_t> a_rdata(const std::string& dotted);
std::string rdata_to_ipv4(const std::vector<std::uint8_t>& rdata);

}  // namespace dbm::dyndns::wire
