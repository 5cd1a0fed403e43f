#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace proxforge {

/// FNV-1a 64-bit content fingerprint. Used for provenance hashes in output
/// headers (config/template/lexicon), not for anything adversarial.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h);

} // namespace proxforge
