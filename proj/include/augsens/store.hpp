#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "augsens/aswt.hpp"

namespace augsens {

inline constexpr int kManifestSchema = 1;

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string content_hash(const std::string& text);
std::string content_hash(const std::vector<std::uint8_t>& bytes);

/// Append-only directory of stage artifacts: <root>/<stage>/<hash>/.
/// A stage is complete once its manifest.json exists; stages are staged in a
/// temporary directory and renamed into place on commit.
class ResultStore {
public:
    explicit ResultStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path stage_dir(const std::string& stage, const std::string& hash) const;
    bool complete(const std::string& stage, const std::string& hash) const;
    /// Manifest text of a complete stage.
    std::string manifest(const std::string& stage, const std::string& hash) const;
    aswt::Archive read_archive(const std::string& stage, const std::string& hash, const std::string& file) const;
    std::string read_text(const std::string& stage, const std::string& hash, const std::string& file) const;

    class Writer {
    public:
        Writer(const ResultStore& store, std::string stage, std::string hash);
        Writer(const Writer&) = delete;
        Writer& operator=(const Writer&) = delete;
        ~Writer();

        void add_archive(const std::string& file, const aswt::Archive& archive);
        void add_text(const std::string& file, const std::string& text);
        /// Writes the manifest (schema, stage, hash, config, files, tensors,
        /// plus the given JSON object as "meta") and moves the stage into place.
        void commit(const std::string& config_json, const std::string& meta_json);

    private:
        void add_bytes(const std::string& file, const std::vector<std::uint8_t>& bytes);

        const ResultStore& store_;
        std::string stage_, hash_;
        std::filesystem::path tmp_;
        struct FileEntry {
            std::string name;
            std::size_t bytes;
            std::string hash;
        };
        std::vector<FileEntry> files_;
        struct TensorEntry {
            std::string file, name, dtype;
            Shape shape;
        };
        std::vector<TensorEntry> tensors_;
        bool committed_ = false;
    };

private:
    std::filesystem::path root_;
};

}  // namespace augsens
