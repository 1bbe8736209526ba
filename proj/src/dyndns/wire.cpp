#include "dyndns/wire.hpp"

#include <arpa/inet.h>

#include <cstring>

namespace dbm::dyndns::wire {
namespace {

constexpr std::size_t kHeaderSize = 12;
constexpr int kMaxPointerHops = 32;

std::uint16_t get16(std::span<const std::uint8_t> p, std::size_t off) {
  if (off + 2 > p.size()) throw WireError("truncated message");
  return static_cast<std::uint16_t>((p[off] << 8) | p[off + 1]);
}

std::uint32_t get32(std::span<const std::uint8_t> p, std::size_t off) {
  return (static_cast<std::uint32_t>(get16(p, off)) << 16) | get16(p, off + 2);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v >> 16));
  put16(out, static_cast<std::uint16_t>(v & 0xffff));
}

/// Reads a (possibly compressed) name at `off`; advances `off` past it.
std::string read_name(std::span<const std::uint8_t> p, std::size_t& off) {
  std::string name;
  std::size_t pos = off;
  bool jumped = false;
  int hops = 0;
  std::size_t total = 0;
  for (;;) {
    if (pos >= p.size()) throw WireError("truncated name");
    std::uint8_t len = p[pos];
    if ((len & 0xC0) == 0xC0) {
      if (pos + 1 >= p.size()) throw WireError("truncated pointer");
      if (++hops > kMaxPointerHops) throw WireError("compression loop");
      std::size_t target = static_cast<std::size_t>(((len & 0x3F) << 8) | p[pos + 1]);
      if (!jumped) off = pos + 2;
      jumped = true;
      pos = target;
      continue;
    }
    if ((len & 0xC0) != 0) throw WireError("bad label type");
    if (len == 0) {
      if (!jumped) off = pos + 1;
      break;
    }
    if (pos + 1 + len > p.size()) throw WireError("truncated label");
    total += len + 1u;
    if (total > 255) throw WireError("name too long");
    if (!name.empty()) name.push_back('.');
    for (std::size_t i = 0; i < len; ++i) {
      char c = static_cast<char>(p[pos + 1 + i]);
      if (c == '.') throw WireError("dot inside label");
      name.push_back(c);
    }
    pos += 1 + len;
  }
  return name;
}

void write_name(std::vector<std::uint8_t>& out, const std::string& name) {
  std::size_t start = 0;
  std::string n = name;
  if (!n.empty() && n.back() == '.') n.pop_back();
  while (start < n.size()) {
    auto dot = n.find('.', start);
    if (dot == std::string::npos) dot = n.size();
    auto len = dot - start;
    if (len == 0 || len > 63) throw WireError("bad label length");
    out.push_back(static_cast<std::uint8_t>(len));
    out.insert(out.end(), n.begin() + static_cast<long>(start), n.begin() + static_cast<long>(dot));
    start = dot + 1;
  }
  out.push_back(0);
}

ResourceRecord read_rr(std::span<const std::uint8_t> p, std::size_t& off) {
  ResourceRecord rr;
  rr.name = read_name(p, off);
  rr.type = get16(p, off);
  rr.rclass = get16(p, off + 2);
  rr.ttl = get32(p, off + 4);
  std::uint16_t rdlen = get16(p, off + 8);
  off += 10;
  if (off + rdlen > p.size()) throw WireError("truncated rdata");
  rr.rdata.assign(p.begin() + static_cast<long>(off), p.begin() + static_cast<long>(off + rdlen));
  off += rdlen;
  return rr;
}

void write_rr(std::vector<std::uint8_t>& out, const ResourceRecord& rr) {
  write_name(out, rr.name);
  put16(out, rr.type);
  put16(out, rr.rclass);
  put32(out, rr.ttl);
  put16(out, static_cast<std::uint16_t>(rr.rdata.size()));
  out.insert(out.end(), rr.rdata.begin(), rr.rdata.end());
}

}  // namespace

std::optional<Header> decode_header(std::span<const std::uint8_t> p) {
  if (p.size() < kHeaderSize) return std::nullopt;
  Header h;
  h.id = get16(p, 0);
  std::uint16_t flags = get16(p, 2);
  h.qr = flags & 0x8000;
  h.opcode = static_cast<std::uint8_t>((flags >> 11) & 0xF);
  h.aa = flags & 0x0400;
  h.tc = flags & 0x0200;
  h.rd = flags & 0x0100;
  h.ra = flags & 0x0080;
  h.z = static_cast<std::uint8_t>((flags >> 4) & 0x7);
  h.rcode = static_cast<Rcode>(flags & 0xF);
  h.qdcount = get16(p, 4);
  h.ancount = get16(p, 6);
  h.nscount = get16(p, 8);
  h.arcount = get16(p, 10);
  return h;
}

Message decode(std::span<const std::uint8_t> p) {
  auto header = decode_header(p);
  if (!header) throw WireError("short header");
  Message m;
  m.header = *header;
  std::size_t off = kHeaderSize;
  for (int i = 0; i < m.header.qdcount; ++i) {
    Question q;
    q.name = read_name(p, off);
    q.qtype = get16(p, off);
    q.qclass = get16(p, off + 2);
    off += 4;
    m.questions.push_back(std::move(q));
  }
  for (int i = 0; i < m.header.ancount; ++i) m.answers.push_back(read_rr(p, off));
  for (int i = 0; i < m.header.nscount; ++i) m.authority.push_back(read_rr(p, off));
  for (int i = 0; i < m.header.arcount; ++i) m.additional.push_back(read_rr(p, off));
  return m;
}

std::vector<std::uint8_t> encode(const Message& m) {
  std::vector<std::uint8_t> out;
  out.reserve(512);
  const auto& h = m.header;
  put16(out, h.id);
  std::uint16_t flags = 0;
  if (h.qr) flags |= 0x8000;
  flags |= static_cast<std::uint16_t>((h.opcode & 0xF) << 11);
  if (h.aa) flags |= 0x0400;
  if (h.tc) flags |= 0x0200;
  if (h.rd) flags |= 0x0100;
  if (h.ra) flags |= 0x0080;
  flags |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(h.rcode) & 0xF);
  put16(out, flags);
  put16(out, static_cast<std::uint16_t>(m.questions.size()));
  put16(out, static_cast<std::uint16_t>(m.answers.size()));
  put16(out, static_cast<std::uint16_t>(m.authority.size()));
  put16(out, static_cast<std::uint16_t>(m.additional.size()));
  for (const auto& q : m.questions) {
    write_name(out, q.name);
    put16(out, q.qtype);
    put16(out, q.qclass);
  }
  for (const auto& rr : m.answers) write_rr(out, rr);
  for (const auto& rr : m.authority) write_rr(out, rr);
  for (const auto& rr : m.additional) write_rr(out, rr);
  return out;
}

std::vector<std::uint8_t> make_query(std::uint16_t id, const std::string& name,
                                     std::uint16_t qtype, bool recursion_desired) {
  Message m;
  m.header.id = id;
  m.header.rd = recursion_desired;
  m.questions.push_back({name, qtype, kClassIN});
  return encode(m);
}

std::vector<std::uint8_t> a_rdata(const std::string& dotted) {
  in_addr addr{};
  if (inet_pton(AF_INET, dotted.c_str(), &addr) != 1) {
    throw std::invalid_argument("not an IPv4 address: " + dotted);
  }
  std::vector<std::uint8_t> out(4);
  std::memcpy(out.data(), &addr.s_addr, 4);
  return out;
}

std::string rdata_to_ipv4(const std::vector<std::uint8_t>& rdata) {
  if (rdata.size() != 4) throw WireError("A rdata must be 4 bytes");
  char buf[INET_ADDRSTRLEN];
  inet_ntop(AF_INET, rdata.data(), buf, sizeof buf);
  return buf;
}

}  // namespace dbm::dyndns::wire
