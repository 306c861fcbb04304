#include "augsens/store.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "augsens/error.hpp"
#include "json.hpp"

namespace augsens {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

void write_file(const fs::path& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace

std::string content_hash(const std::string& text) {
    return hex64(fnv1a(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string content_hash(const std::vector<std::uint8_t>& bytes) { return hex64(fnv1a(bytes.data(), bytes.size())); }

ResultStore::ResultStore(fs::path root) : root_(std::move(root)) {}

fs::path ResultStore::stage_dir(const std::string& stage, const std::string& hash) const { return root_ / stage / hash; }

bool ResultStore::complete(const std::string& stage, const std::string& hash) const {
    return fs::is_regular_file(stage_dir(stage, hash) / "manifest.json");
}

std::string ResultStore::manifest(const std::string& stage, const std::string& hash) const {
    if (!complete(stage, hash)) {
        throw StageDependencyError("stage '" + stage + "' (" + hash + ") has not been run");
    }
    return read_text(stage, hash, "manifest.json");
}

aswt::Archive ResultStore::read_archive(const std::string& stage, const std::string& hash, const std::string& file) const {
    return aswt::Archive::read(stage_dir(stage, hash) / file);
}

std::string ResultStore::read_text(const std::string& stage, const std::string& hash, const std::string& file) const {
    std::ifstream in(stage_dir(stage, hash) / file, std::ios::binary);
    if (!in) throw FormatError("cannot read " + (stage_dir(stage, hash) / file).string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ResultStore::Writer::Writer(const ResultStore& store, std::string stage, std::string hash)
    : store_(store), stage_(std::move(stage)), hash_(std::move(hash)) {
    if (store_.complete(stage_, hash_)) throw DomainError("stage '" + stage_ + "' is already complete");
    tmp_ = store_.root() / stage_ / (".tmp-" + hash_);
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
}

ResultStore::Writer::~Writer() {
    if (!committed_) {
        std::error_code ec;
        fs::remove_all(tmp_, ec);
    }
}

void ResultStore::Writer::add_bytes(const std::string& file, const std::vector<std::uint8_t>& bytes) {
    if (file == "manifest.json") throw DomainError("manifest.json is written by commit");
    for (const auto& f : files_) {
        if (f.name == file) throw DomainError("store is append-only: '" + file + "' already written");
    }
    write_file(tmp_ / file, bytes.data(), bytes.size());
    files_.push_back({file, bytes.size(), content_hash(bytes)});
}

void ResultStore::Writer::add_archive(const std::string& file, const aswt::Archive& archive) {
    add_bytes(file, archive.serialize());
    for (const auto& r : archive.records()) {
        tensors_.push_back({file, r.name, r.dtype == aswt::DType::F32 ? "f32" : "f64", r.shape});
    }
}

void ResultStore::Writer::add_text(const std::string& file, const std::string& text) {
    add_bytes(file, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void ResultStore::Writer::commit(const std::string& config_json, const std::string& meta_json) {
    ordered_json m;
    m["schema"] = kManifestSchema;
    m["stage"] = stage_;
    m["hash"] = hash_;
    m["config"] = ordered_json::parse(config_json);
    m["meta"] = ordered_json::parse(meta_json);
    ordered_json files = ordered_json::array();
    for (const auto& f : files_) files.push_back({{"name", f.name}, {"bytes", f.bytes}, {"fnv1a", f.hash}});
    m["files"] = files;
    ordered_json tensors = ordered_json::array();
    for (const auto& t : tensors_) {
        tensors.push_back({{"file", t.file}, {"name", t.name}, {"dtype", t.dtype}, {"shape", t.shape}});
    }
    m["tensors"] = tensors;
    const std::string text = m.dump(2) + "\n";
    write_file(tmp_ / "manifest.json", text.data(), text.size());
    const fs::path final_dir = store_.stage_dir(stage_, hash_);
    fs::create_directories(final_dir.parent_path());
    fs::rename(tmp_, final_dir);
    committed_ = true;
}

}  // namespace augsens
