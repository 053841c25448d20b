#include "textcaus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "textcaus/common.hpp"

namespace textcaus::corpus {

namespace {

inline bool is_token_char(unsigned char c) {
  // ASCII alphanumerics; bytes >= 0x80 (multibyte UTF-8) are kept verbatim.
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c >= 0x80;
}

inline char lower_ascii(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::vector<std::string> split_lowercase(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (is_token_char(static_cast<unsigned char>(ch))) {
      cur.push_back(lower_ascii(ch));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

NoteCategory note_category_from_string(const std::string& s) {
  if (s == "nursing") return NoteCategory::nursing;
  if (s == "physician") return NoteCategory::physician;
  if (s == "other") return NoteCategory::other;
  throw data_error("unknown note category: '" + s + "'");
}

std::string to_string(NoteCategory c) {
  switch (c) {
    case NoteCategory::nursing: return "nursing";
    case NoteCategory::physician: return "physician";
    case NoteCategory::other: return "other";
  }
  return "other";
}

TokenizeConfig TokenizeConfig::defaults() {
  TokenizeConfig cfg;
  cfg.stop_words = default_stop_words();
  return cfg;
}

void add_stop_words(std::unordered_set<std::string>& out, std::string_view raw) {
  for (auto& tok : split_lowercase(raw)) out.insert(std::move(tok));
}

std::vector<std::string> tokenize(std::string_view text, const TokenizeConfig& cfg) {
  if (cfg.ngram_min < 1 || cfg.ngram_max < cfg.ngram_min)
    throw config_error("tokenize: ngram orders must satisfy 1 <= min <= max");

  std::vector<std::string> unigrams;
  for (auto& tok : split_lowercase(text)) {
    if (cfg.stop_words.count(tok)) continue;
    unigrams.push_back(cfg.stem ? porter_stem(tok) : std::move(tok));
  }

  const std::size_t n = unigrams.size();
  std::vector<std::string> out;
  for (int k = cfg.ngram_min; k <= cfg.ngram_max; ++k) {
    if (static_cast<std::size_t>(k) > n) break;
    for (std::size_t i = 0; i + k <= n; ++i) {
      if (k == 1) {
        out.push_back(unigrams[i]);
        continue;
      }
      std::string gram = unigrams[i];
      for (int j = 1; j < k; ++j) {
        gram.push_back('_');
        gram += unigrams[i + j];
      }
      out.push_back(std::move(gram));
    }
  }
  return out;
}

std::vector<PatientDoc> aggregate_patient_docs(const std::vector<ClinicalNote>& notes,
                                               double cutoff_hours) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::string> order;
  std::vector<std::vector<std::pair<double, const std::string*>>> kept;

  for (const auto& note : notes) {
    if (note.patient_id.empty()) throw data_error("clinical note with empty patient_id");
    if (note.chart_offset_hours < 0)
      throw data_error("clinical note with negative chart_offset_hours (patient " +
                       note.patient_id + ")");
    auto [it, inserted] = slot.emplace(note.patient_id, order.size());
    if (inserted) {
      order.push_back(note.patient_id);
      kept.emplace_back();
    }
    if (note.chart_offset_hours <= cutoff_hours)
      kept[it->second].emplace_back(note.chart_offset_hours, &note.text);
  }

  std::vector<PatientDoc> docs;
  docs.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& parts = kept[i];
    std::stable_sort(parts.begin(), parts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string text;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      if (j > 0) text.push_back(' ');
      text += *parts[j].second;
    }
    docs.push_back(PatientDoc{order[i], std::move(text)});
  }
  return docs;
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = std::lower_bound(tokens.begin(), tokens.end(), token);
  if (it == tokens.end() || *it != token) return -1;
  return static_cast<int>(it - tokens.begin());
}

std::uint64_t Vocabulary::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens) {
    h = fnv1a(h, t.data(), t.size());
    h = fnv1a(h, "\n", 1);
  }
  return h;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_docs,
                            const VocabConfig& cfg) {
  if (cfg.min_df < 1) throw config_error("build_vocabulary: min_df must be >= 1");
  if (cfg.max_df_fraction <= 0.0 || cfg.max_df_fraction > 1.0)
    throw config_error("build_vocabulary: max_df_fraction must be in (0, 1]");

  std::unordered_map<std::string, int> df;
  for (const auto& doc : token_docs) {
    std::unordered_set<std::string_view> in_doc;
    in_doc.reserve(doc.size());
    for (const auto& tok : doc) in_doc.insert(tok);
    for (auto tok : in_doc) ++df[std::string(tok)];
  }

  const double max_df = cfg.max_df_fraction * static_cast<double>(token_docs.size());
  Vocabulary vocab;
  for (const auto& [tok, count] : df) {
    if (count >= cfg.min_df && static_cast<double>(count) <= max_df) vocab.tokens.push_back(tok);
  }
  std::sort(vocab.tokens.begin(), vocab.tokens.end());
  vocab.ngram_order.reserve(vocab.tokens.size());
  vocab.document_frequency.reserve(vocab.tokens.size());
  for (const auto& tok : vocab.tokens) {
    vocab.ngram_order.push_back(
        1 + static_cast<int>(std::count(tok.begin(), tok.end(), '_')));
    vocab.document_frequency.push_back(df.at(tok));
  }
  return vocab;
}

int DocTermMatrix::count_at(int doc, int token) const {
  for (std::size_t k = row_ptr[doc]; k < row_ptr[doc + 1]; ++k)
    if (col_idx[k] == token) return count[k];
  return 0;
}

Eigen::VectorXd DocTermMatrix::dense_row(int doc) const {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(vocab.size());
  for (std::size_t k = row_ptr[doc]; k < row_ptr[doc + 1]; ++k)
    row[col_idx[k]] = static_cast<double>(count[k]);
  return row;
}

Eigen::MatrixXd DocTermMatrix::dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_docs, vocab.size());
  for (int i = 0; i < n_docs; ++i)
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
      m(i, col_idx[k]) = static_cast<double>(count[k]);
  return m;
}

DocTermMatrix build_dtm(const std::vector<std::vector<std::string>>& token_docs,
                        const Vocabulary& vocab) {
  DocTermMatrix dtm;
  dtm.n_docs = static_cast<int>(token_docs.size());
  dtm.vocab = vocab;
  dtm.row_ptr.assign(dtm.n_docs + 1, 0);
  dtm.row_totals.assign(dtm.n_docs, 0);

  std::vector<std::pair<int, int>> row;
  for (int i = 0; i < dtm.n_docs; ++i) {
    std::unordered_map<int, int> counts;
    for (const auto& tok : token_docs[i]) {
      int j = vocab.index_of(tok);
      if (j >= 0) ++counts[j];
    }
    row.assign(counts.begin(), counts.end());
    std::sort(row.begin(), row.end());
    long total = 0;
    for (const auto& [j, c] : row) {
      dtm.col_idx.push_back(j);
      dtm.count.push_back(c);
      total += c;
    }
    dtm.row_totals[i] = total;
    dtm.row_ptr[i + 1] = dtm.col_idx.size();
  }
  return dtm;
}

double cosine_distance(const DocTermMatrix& dtm, int row_i, int row_j) {
  std::size_t a = dtm.row_ptr[row_i], a_end = dtm.row_ptr[row_i + 1];
  std::size_t b = dtm.row_ptr[row_j], b_end = dtm.row_ptr[row_j + 1];
  if (a == a_end || b == b_end) return 1.0;

  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = a; k < a_end; ++k) na += double(dtm.count[k]) * dtm.count[k];
  for (std::size_t k = b; k < b_end; ++k) nb += double(dtm.count[k]) * dtm.count[k];
  while (a < a_end && b < b_end) {
    if (dtm.col_idx[a] < dtm.col_idx[b]) {
      ++a;
    } else if (dtm.col_idx[a] > dtm.col_idx[b]) {
      ++b;
    } else {
      dot += double(dtm.count[a]) * dtm.count[b];
      ++a;
      ++b;
    }
  }
  double sim = dot / (std::sqrt(na) * std::sqrt(nb));
  double dist = 1.0 - sim;
  if (dist < 0.0) dist = 0.0;  // guard rounding on identical rows
  if (dist > 1.0) dist = 1.0;
  return dist;
}

DocTermMatrix subset_rows(const DocTermMatrix& dtm, const std::vector<int>& rows) {
  DocTermMatrix out;
  out.vocab = dtm.vocab;
  out.n_docs = static_cast<int>(rows.size());
  out.row_ptr.push_back(0);
  for (int r : rows) {
    if (r < 0 || r >= dtm.n_docs) throw data_error("subset_rows: row index out of range");
    for (std::size_t k = dtm.row_ptr[r]; k < dtm.row_ptr[r + 1]; ++k) {
      out.col_idx.push_back(dtm.col_idx[k]);
      out.count.push_back(dtm.count[k]);
    }
    out.row_ptr.push_back(out.col_idx.size());
    out.row_totals.push_back(dtm.row_totals[r]);
  }
  return out;
}

KeyTermMatrix key_term_covariates(const DocTermMatrix& dtm,
                                  const std::vector<std::string>& terms,
                                  bool presence) {
  if (terms.empty()) throw data_error("key_term_covariates: no terms");

  KeyTermMatrix out;
  out.values = Eigen::MatrixXd::Zero(dtm.n_docs, static_cast<int>(terms.size()));
  for (std::size_t t = 0; t < terms.size(); ++t) {
    auto parts = split_lowercase(terms[t]);
    std::string norm;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      if (j > 0) norm.push_back('_');
      norm += parts[j];
    }
    if (norm.empty()) throw data_error("key_term_covariates: blank term in list");
    out.terms.push_back(norm);
    int col = dtm.vocab.index_of(norm);
    if (col < 0) {
      out.missing_terms.push_back(norm);
      continue;
    }
    for (int i = 0; i < dtm.n_docs; ++i) {
      int c = dtm.count_at(i, col);
      out.values(i, static_cast<int>(t)) = presence ? (c > 0 ? 1.0 : 0.0) : double(c);
    }
  }
  return out;
}

}  // namespace textcaus::corpus
