#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "setforge/common.hpp"
#include "setforge/expr.hpp"
#include "setforge/imaging.hpp"
#include "setforge/sha256.hpp"

namespace setforge {

// ----------------------------------------------------------------------------
// Fingerprints
// ----------------------------------------------------------------------------

using Fingerprint = Sha256::Digest;

/// Digest of the exact pixel bytes of a clean image. Equal images give equal
/// digests; this is the identity used for dedup and split assignment.
inline Fingerprint fingerprint(const FunctionImage& img) {
    return Sha256::hash(img.data.data(), img.data.size());
}

struct FingerprintHash {
    std::size_t operator()(const Fingerprint& fp) const {
        std::size_t h = 0;
        std::memcpy(&h, fp.data(), sizeof(h));
        return h;
    }
};

using FingerprintSet = std::unordered_set<Fingerprint, FingerprintHash>;

inline Fingerprint fingerprint_from_hex(std::string_view hex) {
    if (hex.size() != 64) {
        throw FormatError("fingerprint hex must be 64 characters");
    }
    const auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw FormatError("bad fingerprint hex digit");
    };
    Fingerprint fp{};
    for (std::size_t i = 0; i < fp.size(); ++i) {
        fp[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    }
    return fp;
}

// ----------------------------------------------------------------------------
// Records and the split ledger
// ----------------------------------------------------------------------------

enum class Split : std::uint8_t { train, test };

inline std::string_view split_name(Split s) { return s == Split::train ? "train" : "test"; }

struct DatasetRecord {
    FunctionImage noisy;
    TokenSeq tokens;
    int op_count = 0;
    Split split = Split::train;
    Fingerprint fp{};  // fingerprint of the clean image
};

/// Bookkeeping produced by the generation loop: the global sequence and clean
/// image sets, the per-count clean-image splits, and the final fingerprint ->
/// split assignment. No fingerprint may be assigned to both splits.
struct SplitLedger {
    std::unordered_set<std::string> seq_all;
    FingerprintSet image_all;
    std::map<int, FingerprintSet> train_images_by_count;
    std::map<int, FingerprintSet> test_images_by_count;
    std::unordered_map<Fingerprint, Split, FingerprintHash> assignment;
};

// ----------------------------------------------------------------------------
// Generation (ascending operator counts, dedup by sequence and clean image)
// ----------------------------------------------------------------------------

struct GenerateConfig {
    int n_min = 0;
    int n_max = 4;
    /// Attempt budget per operator count; either one entry per count or a
    /// single entry applied to every count.
    std::vector<int> attempts_per_count{4000};
    double train_prob = 0.8;
    std::uint64_t seed = 42;
    int resolution = 32;
    ImageRanges ranges{};
};

struct GenerateStats {
    struct PerCount {
        int attempts = 0;
        int duplicate_sequence = 0;
        int domain_error = 0;
        int duplicate_image = 0;  // matched a smaller-count image
        int accepted_train = 0;
        int accepted_test = 0;
    };
    std::map<int, PerCount> per_count;
};

struct GenerateResult {
    std::vector<DatasetRecord> train;
    std::vector<DatasetRecord> test;
    SplitLedger ledger;
    GenerateStats stats;
};

namespace detail {

inline int attempts_for_count(const GenerateConfig& cfg, int n) {
    if (cfg.attempts_per_count.empty()) {
        throw ConfigError("attempts_per_count must not be empty");
    }
    if (cfg.attempts_per_count.size() == 1) {
        return cfg.attempts_per_count[0];
    }
    const std::size_t idx = static_cast<std::size_t>(n - cfg.n_min);
    if (idx >= cfg.attempts_per_count.size()) {
        throw ConfigError("attempts_per_count has fewer entries than operator counts");
    }
    return cfg.attempts_per_count[idx];
}

struct Attempt {
    TokenSeq tokens;
    std::optional<RenderedPair> images;
    Fingerprint fp{};
};

/// One attempt is a pure function of (seed, count, index): rejecting another
/// attempt can never shift this one's draws.
inline Attempt run_attempt(const GenerateConfig& cfg, int n, int index) {
    const std::uint64_t attempt_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(n),
                                                   static_cast<std::uint64_t>(index));
    Rng expr_rng = make_rng(derive_seed(attempt_seed, 0));
    Attempt a;
    const Expr tree = sample_expression(n, expr_rng);
    a.tokens = to_preorder(tree);
    a.images = render_pair(tree, cfg.resolution, cfg.ranges, derive_seed(attempt_seed, 1));
    if (a.images) {
        a.fp = fingerprint(a.images->clean);
    }
    return a;
}

inline bool draw_train_flag(const GenerateConfig& cfg, int n, int index) {
    const std::uint64_t attempt_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(n),
                                                   static_cast<std::uint64_t>(index));
    Rng rng = make_rng(derive_seed(attempt_seed, 2));
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.train_prob;
}

}  // namespace detail

/// Runs the full generation and assignment loop. Counts ascend; an attempt is
/// dropped if its sequence was seen before (the sequence still enters
/// seq_all), if any grid point hits a domain error, or if its clean image
/// matches one accepted at a smaller count. Within a count, attempts sharing a
/// clean image inherit the first one's split; per-count image sets merge into
/// the global set only after the count finishes.
///
/// Sampling and rendering are spread over `threads` workers; acceptance runs
/// serially in attempt order, so the output is identical for any thread count.
inline GenerateResult generate_dataset(const GenerateConfig& cfg, int threads = 1) {
    if (cfg.n_min < 0 || cfg.n_min > cfg.n_max) {
        throw ConfigError("require 0 <= n_min <= n_max");
    }
    if (!(cfg.train_prob > 0.0 && cfg.train_prob < 1.0)) {
        throw ConfigError("train_prob must lie strictly between 0 and 1");
    }
    for (int t : cfg.attempts_per_count) {
        if (t < 0) {
            throw ConfigError("attempt budgets must be non-negative");
        }
    }

    GenerateResult out;
    SplitLedger& ledger = out.ledger;

    for (int n = cfg.n_min; n <= cfg.n_max; ++n) {
        const int total = detail::attempts_for_count(cfg, n);
        auto& stats = out.stats.per_count[n];
        stats.attempts = total;

        FingerprintSet& train_images = ledger.train_images_by_count[n];
        FingerprintSet& test_images = ledger.test_images_by_count[n];

        constexpr int window_size = 512;
        std::vector<detail::Attempt> window;
        for (int base = 0; base < total; base += window_size) {
            const int count = std::min(window_size, total - base);
            window.assign(static_cast<std::size_t>(count), detail::Attempt{});

            const int workers = std::max(1, std::min(threads, count));
            if (workers == 1) {
                for (int i = 0; i < count; ++i) {
                    window[static_cast<std::size_t>(i)] = detail::run_attempt(cfg, n, base + i);
                }
            } else {
                std::vector<std::thread> pool;
                pool.reserve(static_cast<std::size_t>(workers));
                for (int w = 0; w < workers; ++w) {
                    pool.emplace_back([&, w] {
                        for (int i = w; i < count; i += workers) {
                            window[static_cast<std::size_t>(i)] =
                                detail::run_attempt(cfg, n, base + i);
                        }
                    });
                }
                for (auto& t : pool) {
                    t.join();
                }
            }

            // Ordered commit stage.
            for (int i = 0; i < count; ++i) {
                detail::Attempt& a = window[static_cast<std::size_t>(i)];
                if (!ledger.seq_all.insert(to_string(a.tokens)).second) {
                    ++stats.duplicate_sequence;
                    continue;
                }
                if (!a.images) {
                    ++stats.domain_error;
                    continue;
                }
                if (ledger.image_all.contains(a.fp)) {
                    ++stats.duplicate_image;
                    continue;
                }

                Split split;
                if (train_images.contains(a.fp)) {
                    split = Split::train;
                } else if (test_images.contains(a.fp)) {
                    split = Split::test;
                } else if (detail::draw_train_flag(cfg, n, base + i)) {
                    split = Split::train;
                    train_images.insert(a.fp);
                } else {
                    split = Split::test;
                    test_images.insert(a.fp);
                }

                DatasetRecord rec;
                rec.noisy = std::move(a.images->noisy);
                rec.tokens = std::move(a.tokens);
                rec.op_count = n;
                rec.split = split;
                rec.fp = a.fp;
                ledger.assignment[a.fp] = split;
                if (split == Split::train) {
                    ++stats.accepted_train;
                    out.train.push_back(std::move(rec));
                } else {
                    ++stats.accepted_test;
                    out.test.push_back(std::move(rec));
                }
            }
        }

        ledger.image_all.insert(train_images.begin(), train_images.end());
        ledger.image_all.insert(test_images.begin(), test_images.end());
    }
    return out;
}

// ----------------------------------------------------------------------------
// Split policy: short expressions train-only, with up-sampling
// ----------------------------------------------------------------------------

struct SplitPolicy {
    /// Records with fewer operators than this are forced into the train split.
    int train_only_below = 4;
    /// Duplication factor per operator count; counts not listed stay at 1.
    std::map<int, int> upsample{{2, 10}, {3, 2}};
};

/// Re-tags sub-threshold records to train and duplicates them per the
/// up-sample table. Duplicates are exact copies. The ledger's assignment map
/// is updated so it keeps describing the final records.
inline void apply_split_policy(GenerateResult& data, const SplitPolicy& policy = {}) {
    std::vector<DatasetRecord> kept_test;
    kept_test.reserve(data.test.size());
    for (DatasetRecord& rec : data.test) {
        if (rec.op_count < policy.train_only_below) {
            rec.split = Split::train;
            data.ledger.assignment[rec.fp] = Split::train;
            data.train.push_back(std::move(rec));
        } else {
            kept_test.push_back(std::move(rec));
        }
    }
    data.test = std::move(kept_test);

    std::vector<DatasetRecord> upsampled;
    upsampled.reserve(data.train.size());
    for (DatasetRecord& rec : data.train) {
        int factor = 1;
        if (const auto it = policy.upsample.find(rec.op_count); it != policy.upsample.end()) {
            factor = it->second;
        }
        for (int i = 1; i < factor; ++i) {
            upsampled.push_back(rec);
        }
        upsampled.push_back(std::move(rec));
    }
    data.train = std::move(upsampled);
}

// ----------------------------------------------------------------------------
// On-disk format
//
// A dataset directory holds `manifest.tsv` and `images.bin`. Each manifest
// line is
//   <split>\t<op_count>\t<token string>\t<blob offset>\t<blob length>\t<fp hex>
// and each blob entry is a serialized image followed by a CRC32 of the entry
// bytes (u32, little-endian). Up-sampled duplicates share one blob entry.
// ----------------------------------------------------------------------------

namespace detail {

inline std::uint32_t crc32(const void* data, std::size_t size, std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int j = 0; j < 8; ++j) {
                c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            }
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const std::uint8_t*>(data);
    crc = ~crc;
    for (std::size_t i = 0; i < size; ++i) {
        crc = table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
    }
    return ~crc;
}

}  // namespace detail

inline constexpr std::string_view manifest_file = "manifest.tsv";
inline constexpr std::string_view blob_file = "images.bin";

inline void write_dataset(const std::vector<DatasetRecord>& train,
                          const std::vector<DatasetRecord>& test,
                          const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / manifest_file);
    std::ofstream blob(dir / blob_file, std::ios::binary);
    if (!manifest || !blob) {
        throw IoError("cannot open dataset files for writing in " + dir.string());
    }

    std::uint64_t offset = 0;
    std::unordered_map<std::string, std::pair<std::uint64_t, std::uint64_t>> dedup;

    const auto emit = [&](const DatasetRecord& rec) {
        std::string entry = serialize_image(rec.noisy);
        const std::uint32_t crc = detail::crc32(entry.data(), entry.size());
        for (int i = 0; i < 4; ++i) {
            entry.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));
        }

        std::pair<std::uint64_t, std::uint64_t> location{offset, entry.size()};
        const std::string key = to_hex(Sha256::hash(entry.data(), entry.size()));
        if (const auto it = dedup.find(key); it != dedup.end()) {
            location = it->second;
        } else {
            blob.write(entry.data(), static_cast<std::streamsize>(entry.size()));
            dedup.emplace(key, location);
            offset += entry.size();
        }

        manifest << split_name(rec.split) << '\t' << rec.op_count << '\t' << to_string(rec.tokens)
                 << '\t' << location.first << '\t' << location.second << '\t' << to_hex(rec.fp)
                 << '\n';
    };

    for (const DatasetRecord& rec : train) {
        emit(rec);
    }
    for (const DatasetRecord& rec : test) {
        emit(rec);
    }
    if (!manifest || !blob) {
        throw IoError("dataset write failed in " + dir.string());
    }
}

struct Dataset {
    std::vector<DatasetRecord> train;
    std::vector<DatasetRecord> test;
};

inline Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / manifest_file);
    if (!manifest) {
        throw IoError("cannot open " + (dir / manifest_file).string());
    }
    std::ifstream blob(dir / blob_file, std::ios::binary);
    if (!blob) {
        throw IoError("cannot open " + (dir / blob_file).string());
    }
    std::string blob_bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());

    Dataset out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::array<std::string, 6> fields;
        std::size_t start = 0;
        for (std::size_t f = 0; f < 6; ++f) {
            const std::size_t end = f + 1 < 6 ? line.find('\t', start) : line.size();
            if (end == std::string::npos) {
                throw FormatError("manifest line " + std::to_string(line_no) + ": expected 6 fields");
            }
            fields[f] = line.substr(start, end - start);
            start = end + 1;
        }

        DatasetRecord rec;
        if (fields[0] == "train") {
            rec.split = Split::train;
        } else if (fields[0] == "test") {
            rec.split = Split::test;
        } else {
            throw FormatError("manifest line " + std::to_string(line_no) + ": bad split tag");
        }
        rec.op_count = std::stoi(fields[1]);
        rec.tokens = parse_tokens(fields[2]);
        rec.fp = fingerprint_from_hex(fields[5]);

        const std::uint64_t offset = std::stoull(fields[3]);
        const std::uint64_t length = std::stoull(fields[4]);
        if (length < 4 || offset + length > blob_bytes.size()) {
            throw ChecksumError("blob entry out of range at manifest line " +
                                std::to_string(line_no));
        }
        const auto* entry = reinterpret_cast<const unsigned char*>(blob_bytes.data()) + offset;
        const std::size_t body = static_cast<std::size_t>(length) - 4;
        std::uint32_t stored = 0;
        for (int i = 0; i < 4; ++i) {
            stored |= static_cast<std::uint32_t>(entry[body + static_cast<std::size_t>(i)])
                      << (8 * i);
        }
        if (detail::crc32(entry, body) != stored) {
            throw ChecksumError("blob checksum mismatch at manifest line " +
                                std::to_string(line_no));
        }
        rec.noisy = deserialize_image(entry, body);

        int internal = 0;
        for (SymbolId id : rec.tokens) {
            internal += is_operator(id) ? 1 : 0;
        }
        if (internal != rec.op_count) {
            throw FormatError("operator count does not match tokens at manifest line " +
                              std::to_string(line_no));
        }

        (rec.split == Split::train ? out.train : out.test).push_back(std::move(rec));
    }
    return out;
}

}  // namespace setforge
