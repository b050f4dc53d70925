#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace avf {

// Minimal SHA-256, used to fingerprint checkpoint files for the
// freeze contract. Verified against the FIPS 180-4 test vectors.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    // Finalizes and returns the digest as lowercase hex. The object must
    // not be updated afterwards.
    std::string hex_digest();

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t h_[8];
    std::uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
    std::uint64_t total_bits_ = 0;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file_hex(const std::string& path);

}  // namespace avf
