#pragma once

// JSONL persistence: one JSON document per line. Used for corpora, verdicts,
// labels, drift rows and the embedding cache.

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "spasm/backend.hpp"
#include "spasm/error.hpp"
#include "spasm/hash.hpp"

namespace spasm {

namespace fs = std::filesystem;

// Appends rows and flushes after each one, so an interrupted campaign keeps
// everything written so far. Safe to share between threads.
class JsonlWriter {
public:
  enum class Mode { truncate, append };

  explicit JsonlWriter(const fs::path& path, Mode mode = Mode::truncate) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, mode == Mode::append ? std::ios::app : std::ios::trunc);
    if (!out_) throw ConfigError("cannot open " + path.string() + " for writing");
  }

  void write(const json& row) {
    std::lock_guard lock(mutex_);
    out_ << row.dump() << '\n';
    out_.flush();
    ++rows_;
  }

  template <typename T>
  void write_value(const T& value) {
    write(json(value));
  }

  std::size_t rows() const noexcept { return rows_; }
  const fs::path& path() const noexcept { return path_; }

private:
  fs::path path_;
  std::ofstream out_;
  std::mutex mutex_;
  std::size_t rows_ = 0;
};

// Reads every nonblank line; a malformed line raises FormatError naming the
// file and 1-based line number.
inline std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": invalid JSON");
    rows.push_back(std::move(j));
  }
  return rows;
}

template <typename T>
std::vector<T> read_jsonl_as(const fs::path& path) {
  const auto rows = read_jsonl(path);
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(rows[i].get<T>());
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": row " + std::to_string(i + 1) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": row " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void write_jsonl(const fs::path& path, const std::vector<T>& rows) {
  JsonlWriter w(path);
  for (const auto& r : rows) w.write_value(r);
}

// "<client>__<responder>__<mode>.jsonl" with path-hostile characters in
// model names replaced.
inline std::string corpus_file_name(std::string_view client_model, std::string_view responder_model,
                                    std::string_view mode) {
  auto clean = [](std::string_view s) {
    std::string out(s);
    for (auto& c : out)
      if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '-';
    return out;
  };
  std::string m(mode);
  for (auto& c : m) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return clean(client_model) + "__" + clean(responder_model) + "__" + m + ".jsonl";
}

// Embedding cache keyed by (conversation_id, model, text hash). Backed by an
// append-only JSONL file when a path is given; later rows win.
class EmbeddingCache {
public:
  EmbeddingCache() = default;

  explicit EmbeddingCache(fs::path path) : path_(std::move(path)) {
    if (fs::exists(*path_))
      for (const auto& row : read_jsonl(*path_))
        entries_[key(row.at("conversation_id").get<std::string>(), row.at("model").get<std::string>(),
                     row.at("text_hash").get<std::string>())] =
            row.at("values").get<std::vector<double>>();
  }

  static std::string text_hash(std::string_view text) { return to_hex(fnv1a(text)); }

  std::optional<std::vector<double>> get(const std::string& conversation_id,
                                         const std::string& model, std::string_view text) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key(conversation_id, model, text_hash(text)));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& conversation_id, const std::string& model, std::string_view text,
           const std::vector<double>& values) {
    std::lock_guard lock(mutex_);
    const auto h = text_hash(text);
    entries_[key(conversation_id, model, h)] = values;
    if (path_) {
      if (!writer_) writer_ = std::make_unique<JsonlWriter>(*path_, JsonlWriter::Mode::append);
      writer_->write({{"conversation_id", conversation_id},
                      {"model", model},
                      {"text_hash", h},
                      {"values", values}});
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

private:
  static std::string key(const std::string& id, const std::string& model, const std::string& h) {
    return id + '\x1f' + model + '\x1f' + h;
  }

  std::optional<fs::path> path_;
  std::map<std::string, std::vector<double>> entries_;
  std::unique_ptr<JsonlWriter> writer_;
  mutable std::mutex mutex_;
};

} // namespace spasm
