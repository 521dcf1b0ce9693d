#include "grag/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "grag/error.hpp"
#include "grag/ids.hpp"
#include "grag/text.hpp"

namespace grag {

using nlohmann::json;

void ChunkingParams::validate() const {
  if (chunk_size < 1) throw Error(ErrorCode::config, "chunk_size must be >= 1");
  if (chunk_overlap >= chunk_size) {
    throw Error(ErrorCode::config, "chunk_overlap must be smaller than chunk_size");
  }
}

namespace {

bool ieq_prefix(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (pos + prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char c = s[pos + i];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    if (c != prefix[i]) return false;
  }
  return true;
}

bool is_tag_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-';
}

constexpr std::array<std::string_view, 33> kBlockTags = {
    "address", "article", "aside",  "blockquote", "br",     "dd",     "div",    "dl",    "dt",
    "figcaption", "figure", "footer", "form",    "h1",     "h2",     "h3",     "h4",    "h5",
    "h6",      "header",  "hr",     "li",        "main",   "nav",    "ol",     "p",     "pre",
    "section", "table",   "title",  "tr",        "ul",     "tbody"};

struct NamedEntity {
  std::string_view name;
  char32_t cp;
};

constexpr NamedEntity kEntities[] = {
    {"amp", U'&'},     {"lt", U'<'},       {"gt", U'>'},      {"quot", U'"'},    {"apos", U'\''},
    {"nbsp", U' '},    {"agrave", 0xE0},   {"aacute", 0xE1},  {"egrave", 0xE8},  {"eacute", 0xE9},
    {"igrave", 0xEC},  {"iacute", 0xED},   {"ograve", 0xF2},  {"oacute", 0xF3},  {"ugrave", 0xF9},
    {"uacute", 0xFA},  {"Agrave", 0xC0},   {"Egrave", 0xC8},  {"Eacute", 0xC9},  {"Igrave", 0xCC},
    {"Ograve", 0xD2},  {"Ugrave", 0xD9},   {"auml", 0xE4},    {"ouml", 0xF6},    {"uuml", 0xFC},
    {"Auml", 0xC4},    {"Ouml", 0xD6},     {"Uuml", 0xDC},    {"szlig", 0xDF},   {"ccedil", 0xE7},
    {"euro", 0x20AC},  {"copy", 0xA9},     {"reg", 0xAE},     {"deg", 0xB0},     {"laquo", 0xAB},
    {"raquo", 0xBB},   {"ndash", 0x2013},  {"mdash", 0x2014}, {"lsquo", 0x2018}, {"rsquo", 0x2019},
    {"ldquo", 0x201C}, {"rdquo", 0x201D},  {"hellip", 0x2026}, {"middot", 0xB7}, {"sup2", 0xB2},
    {"sup3", 0xB3}};

// Decodes the entity starting at s[pos] == '&'. Returns consumed length, 0
// when the text is not a recognised entity.
std::size_t decode_entity(std::string_view s, std::size_t pos, std::string& out) {
  const auto semi = s.find(';', pos + 1);
  if (semi == std::string_view::npos || semi - pos > 12) return 0;
  const std::string_view body = s.substr(pos + 1, semi - pos - 1);
  if (body.empty()) return 0;
  if (body[0] == '#') {
    unsigned long cp = 0;
    bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
    const std::string_view digits = body.substr(hex ? 2 : 1);
    if (digits.empty()) return 0;
    for (char c : digits) {
      int v;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (hex && c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else if (hex && c >= 'A' && c <= 'F') v = c - 'A' + 10;
      else return 0;
      cp = cp * (hex ? 16 : 10) + static_cast<unsigned long>(v);
      if (cp > 0x10FFFF) return 0;
    }
    if (cp == 0) return 0;
    text::append_utf8(out, static_cast<char32_t>(cp == 0xA0 ? U' ' : cp));
    return semi - pos + 1;
  }
  for (const auto& e : kEntities) {
    if (e.name == body) {
      text::append_utf8(out, e.cp);
      return semi - pos + 1;
    }
  }
  return 0;
}

bool is_page_number_line(std::string_view line) {
  // Optional dashes/spaces, digits, optional dashes/spaces; nothing else.
  const auto skip_flank = [](std::string_view s, std::size_t i) {
    while (i < s.size()) {
      if (s[i] == ' ' || s[i] == '-') {
        ++i;
      } else if (s.compare(i, 3, "\xe2\x80\x93") == 0 || s.compare(i, 3, "\xe2\x80\x94") == 0) {
        i += 3;
      } else {
        break;
      }
    }
    return i;
  };
  std::size_t i = skip_flank(line, 0);
  const std::size_t digits_start = i;
  while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
  if (i == digits_start) return false;
  return skip_flank(line, i) == line.size();
}

// Collapses horizontal whitespace, trims lines, drops blank and page-number
// lines, joins with single newlines.
std::string normalize_lines(std::string_view s) {
  std::string out;
  std::string line;
  const auto flush = [&] {
    while (!line.empty() && line.back() == ' ') line.pop_back();
    if (!line.empty() && !is_page_number_line(line)) {
      if (!out.empty()) out.push_back('\n');
      out += line;
    }
    line.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\n') {
      flush();
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v' ||
               (c == '\xC2' && i + 1 < s.size() && s[i + 1] == '\xA0')) {
      if (c == '\xC2') ++i;
      if (!line.empty() && line.back() != ' ') line.push_back(' ');
    } else {
      line.push_back(c);
    }
  }
  flush();
  return out;
}

}  // namespace

std::string clean_plain(std::string_view raw) { return normalize_lines(raw); }

std::string clean_html(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    const char c = raw[i];
    if (c == '&') {
      const std::size_t used = decode_entity(raw, i, out);
      if (used == 0) {
        out.push_back('&');
        ++i;
      } else {
        i += used;
      }
      continue;
    }
    if (c != '<' || i + 1 >= raw.size()) {
      out.push_back(c);
      ++i;
      continue;
    }
    if (raw.compare(i, 4, "<!--") == 0) {
      const auto close = raw.find("-->", i + 4);
      i = close == std::string_view::npos ? raw.size() : close + 3;
      continue;
    }
    const char next = raw[i + 1];
    const bool closing = next == '/';
    const bool tag_like = closing || next == '!' || next == '?' ||
                          (next >= 'a' && next <= 'z') || (next >= 'A' && next <= 'Z');
    if (!tag_like) {
      out.push_back(c);
      ++i;
      continue;
    }
    const auto gt = raw.find('>', i + 1);
    if (gt == std::string_view::npos) {
      // Unterminated tag: drop the remainder of the markup.
      break;
    }
    std::size_t name_start = i + 1 + (closing ? 1 : 0);
    std::size_t name_end = name_start;
    while (name_end < gt && is_tag_name_char(raw[name_end])) ++name_end;
    const std::string name = text::to_lower_ascii(raw.substr(name_start, name_end - name_start));
    i = gt + 1;
    if (!closing && (name == "script" || name == "style")) {
      const std::string close_tag = "</" + name;
      std::size_t j = i;
      while (j < raw.size() && !ieq_prefix(raw, j, close_tag)) ++j;
      if (j >= raw.size()) {
        i = raw.size();
      } else {
        const auto end = raw.find('>', j);
        i = end == std::string_view::npos ? raw.size() : end + 1;
      }
      continue;
    }
    if (name == "td" || name == "th") {
      out.push_back(' ');
    } else if (std::find(kBlockTags.begin(), kBlockTags.end(), name) != kBlockTags.end()) {
      out.push_back('\n');
    }
  }
  return normalize_lines(out);
}

std::string clean_document(const SourceDocument& doc) {
  return doc.format == DocumentFormat::html ? clean_html(doc.raw) : clean_plain(doc.raw);
}

// ---------------------------------------------------------------------------
// Chunking

namespace {

constexpr std::array<std::array<std::u32string_view, 3>, 4> kSeparators = {{
    {U"\n", U"", U""},
    {U". ", U"! ", U"? "},
    {U", ", U"", U""},
    {U" ", U"", U""},
}};

// True when text[..pos) ends with a separator of `level` or higher priority.
bool is_boundary(std::u32string_view text, std::size_t pos, std::size_t level) {
  for (std::size_t l = 0; l <= level && l < kSeparators.size(); ++l) {
    for (auto sep : kSeparators[l]) {
      if (sep.empty() || sep.size() > pos) continue;
      if (text.compare(pos - sep.size(), sep.size(), sep) == 0) return true;
    }
  }
  return false;
}

}  // namespace

std::vector<Chunk> chunk_text(std::string_view input, const ChunkingParams& params) {
  params.validate();
  const std::u32string text = text::decode_utf8(input);
  const std::size_t n = text.size();
  const std::size_t size = params.chunk_size;
  const std::size_t overlap = params.chunk_overlap;

  std::vector<Chunk> chunks;
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = n;
    std::size_t level = kSeparators.size();  // character level
    if (n - start > size) {
      end = start + size;
      for (std::size_t l = 0; l < kSeparators.size(); ++l) {
        std::size_t found = 0;
        for (std::size_t p = start + size; p > start; --p) {
          if (is_boundary(text, p, l)) {
            found = p;
            break;
          }
        }
        if (found != 0) {
          end = found;
          level = l;
          break;
        }
      }
    }

    Chunk chunk;
    chunk.index = chunks.size();
    chunk.span = {start, end};
    chunk.content = text::encode_utf8(std::u32string_view(text).substr(start, end - start));
    chunks.push_back(std::move(chunk));
    if (end == n) break;

    // Next chunk starts at the earliest boundary inside the overlap window.
    std::size_t next = end;
    const std::size_t lo = std::max(start + 1, end >= overlap ? end - overlap : 0);
    for (std::size_t q = lo; q < end; ++q) {
      if (level == kSeparators.size() || is_boundary(text, q, level)) {
        next = q;
        break;
      }
    }
    start = next;
  }
  return chunks;
}

std::string chunk_id_for(std::string_view doc_id, std::size_t index) {
  return node_id(NodeKind::Chunk, std::string(doc_id) + "#" + std::to_string(index)).hex();
}

std::vector<Chunk> make_chunks(const SourceDocument& doc, const ChunkingParams& params) {
  auto chunks = chunk_text(clean_document(doc), params);
  for (auto& c : chunks) {
    c.doc_id = doc.doc_id;
    c.chunk_id = chunk_id_for(doc.doc_id, c.index);
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename Fn>
void for_each_json_line(std::string_view data, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= data.size()) {
    auto nl = data.find('\n', pos);
    if (nl == std::string_view::npos) nl = data.size();
    const std::string_view line = text::trim(data.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw RecordError(ErrorCode::corrupt_record, line_no, e.what());
    }
    if (!j.is_object()) throw RecordError(ErrorCode::corrupt_record, line_no, "expected an object");
    fn(j, line_no);
  }
}

std::string required_string(const json& j, const char* key, std::size_t line) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw RecordError(ErrorCode::corrupt_record, line, std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::string optional_string(const json& j, const char* key) {
  const auto it = j.find(key);
  return it != j.end() && it->is_string() ? it->get<std::string>() : std::string();
}

}  // namespace

std::vector<SourceDocument> parse_manifest(std::string_view jsonl,
                                           const std::filesystem::path& base_dir) {
  std::vector<SourceDocument> docs;
  std::vector<std::string> seen;
  for_each_json_line(jsonl, [&](const json& j, std::size_t line) {
    SourceDocument d;
    d.doc_id = required_string(j, "doc_id", line);
    if (d.doc_id.empty()) throw RecordError(ErrorCode::corrupt_record, line, "empty doc_id");
    if (std::find(seen.begin(), seen.end(), d.doc_id) != seen.end()) {
      throw RecordError(ErrorCode::corrupt_record, line, "duplicate doc_id '" + d.doc_id + "'");
    }
    seen.push_back(d.doc_id);
    d.uri = required_string(j, "uri", line);
    const std::string format = optional_string(j, "format");
    if (format == "html") d.format = DocumentFormat::html;
    else if (format == "plain" || format.empty()) d.format = DocumentFormat::plain;
    else throw RecordError(ErrorCode::corrupt_record, line, "unknown format '" + format + "'");
    d.language = optional_string(j, "language");
    if (j.contains("text")) {
      d.raw = required_string(j, "text", line);
    } else if (j.contains("path")) {
      std::filesystem::path p = required_string(j, "path", line);
      if (p.is_relative()) p = base_dir / p;
      try {
        d.raw = read_file(p);
      } catch (const Error& e) {
        throw RecordError(ErrorCode::io, line, e.what());
      }
    } else {
      throw RecordError(ErrorCode::corrupt_record, line, "record needs 'path' or 'text'");
    }
    docs.push_back(std::move(d));
  });
  return docs;
}

std::vector<SourceDocument> load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

void save_chunks(const std::filesystem::path& path, const std::vector<ChunkRecord>& chunks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  for (const auto& r : chunks) {
    json j = {{"chunk_id", r.chunk.chunk_id}, {"doc_id", r.chunk.doc_id},
              {"index", r.chunk.index},       {"content", r.chunk.content},
              {"start", r.chunk.span.start},  {"end", r.chunk.span.end},
              {"uri", r.uri},                 {"language", r.language}};
    out << j.dump() << '\n';
  }
}

std::vector<ChunkRecord> load_chunks(const std::filesystem::path& path) {
  std::vector<ChunkRecord> out;
  for_each_json_line(read_file(path), [&](const json& j, std::size_t line) {
    ChunkRecord r;
    try {
      r.chunk.chunk_id = j.at("chunk_id").get<std::string>();
      r.chunk.doc_id = j.at("doc_id").get<std::string>();
      r.chunk.index = j.at("index").get<std::size_t>();
      r.chunk.content = j.at("content").get<std::string>();
      r.chunk.span = {j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>()};
      r.uri = j.at("uri").get<std::string>();
      r.language = optional_string(j, "language");
    } catch (const json::exception& e) {
      throw RecordError(ErrorCode::corrupt_record, line, e.what());
    }
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace grag
