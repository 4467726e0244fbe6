#include "bcot/rng.hpp"

namespace bcot {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a
std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index) {
  std::uint64_t s = splitmix64(root);
  s = splitmix64(s ^ hash_label(label));
  s = splitmix64(s ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  return s;
}

Rng make_stream(std::uint64_t root, std::string_view label, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(derive_seed(root, label, index)),
                    static_cast<std::uint32_t>(derive_seed(root, label, index) >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace bcot
