#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>

namespace setforge {

// Self-contained SHA-256 (FIPS 180-4). Used to fingerprint clean image bytes;
// inline here so the library stays header-only with no crypto link
// dependency.

class Sha256 {
public:
    using Digest = std::array<std::uint8_t, 32>;

    void update(const void* data, std::size_t size) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        total_ += size;
        while (size > 0) {
            const std::size_t take = std::min(size, std::size_t{64} - fill_);
            std::memcpy(buffer_.data() + fill_, p, take);
            fill_ += take;
            p += take;
            size -= take;
            if (fill_ == 64) {
                process_block(buffer_.data());
                fill_ = 0;
            }
        }
    }

    Digest finish() {
        const std::uint64_t bit_len = total_ * 8;
        const std::uint8_t pad_byte = 0x80;
        update(&pad_byte, 1);
        const std::uint8_t zero = 0;
        while (fill_ != 56) {
            update(&zero, 1);
        }
        std::array<std::uint8_t, 8> len_bytes{};
        for (int i = 0; i < 8; ++i) {
            len_bytes[static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>(bit_len >> (56 - 8 * i));
        }
        update(len_bytes.data(), len_bytes.size());

        Digest out{};
        for (int i = 0; i < 8; ++i) {
            out[static_cast<std::size_t>(4 * i + 0)] = static_cast<std::uint8_t>(state_[i] >> 24);
            out[static_cast<std::size_t>(4 * i + 1)] = static_cast<std::uint8_t>(state_[i] >> 16);
            out[static_cast<std::size_t>(4 * i + 2)] = static_cast<std::uint8_t>(state_[i] >> 8);
            out[static_cast<std::size_t>(4 * i + 3)] = static_cast<std::uint8_t>(state_[i]);
        }
        return out;
    }

    static Digest hash(const void* data, std::size_t size) {
        Sha256 h;
        h.update(data, size);
        return h.finish();
    }

private:
    static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

    void process_block(const std::uint8_t* block) {
        static constexpr std::array<std::uint32_t, 64> k{
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
            0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
            0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
            0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
            0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
            0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
            0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
            0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
            0xc67178f2};

        std::array<std::uint32_t, 64> w{};
        for (int i = 0; i < 16; ++i) {
            w[static_cast<std::size_t>(i)] =
                (static_cast<std::uint32_t>(block[4 * i]) << 24) |
                (static_cast<std::uint32_t>(block[4 * i + 1]) << 16) |
                (static_cast<std::uint32_t>(block[4 * i + 2]) << 8) |
                static_cast<std::uint32_t>(block[4 * i + 3]);
        }
        for (int i = 16; i < 64; ++i) {
            const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[static_cast<std::size_t>(i)] = w[i - 16] + s0 + w[i - 7] + s1;
        }

        std::uint32_t a = state_[0], b = state_[1], c = state_[2], d = state_[3];
        std::uint32_t e = state_[4], f = state_[5], g = state_[6], h = state_[7];
        for (int i = 0; i < 64; ++i) {
            const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const std::uint32_t ch = (e & f) ^ (~e & g);
            const std::uint32_t t1 = h + s1 + ch + k[static_cast<std::size_t>(i)] +
                                     w[static_cast<std::size_t>(i)];
            const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const std::uint32_t t2 = s0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        state_[0] += a;
        state_[1] += b;
        state_[2] += c;
        state_[3] += d;
        state_[4] += e;
        state_[5] += f;
        state_[6] += g;
        state_[7] += h;
    }

    std::array<std::uint32_t, 8> state_{0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                        0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    std::array<std::uint8_t, 64> buffer_{};
    std::size_t fill_ = 0;
    std::uint64_t total_ = 0;
};

inline std::string to_hex(const Sha256::Digest& digest) {
    static constexpr char chars[] = "0123456789abcdef";
    std::string out;
    out.reserve(digest.size() * 2);
    for (std::uint8_t byte : digest) {
        out.push_back(chars[byte >> 4]);
        out.push_back(chars[byte & 0xf]);
    }
    return out;
}

}  // namespace setforge
