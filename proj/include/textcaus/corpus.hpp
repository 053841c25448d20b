#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

namespace textcaus::corpus {

enum class NoteCategory { nursing, physician, other };

NoteCategory note_category_from_string(const std::string& s);
std::string to_string(NoteCategory c);

struct ClinicalNote {
  std::string patient_id;
  NoteCategory category = NoteCategory::other;
  double chart_offset_hours = 0.0;  // hours since admission, >= 0
  std::string text;
};

// One concatenated pre-treatment document per patient.
struct PatientDoc {
  std::string patient_id;
  std::string text;
};

struct TokenizeConfig {
  int ngram_min = 1;
  int ngram_max = 3;
  bool stem = false;
  std::unordered_set<std::string> stop_words;  // post-normalization unigrams

  static TokenizeConfig defaults();
};

// Built-in English stop list (~170 words). Entries are already normalized the
// same way tokenize() normalizes text, so contractions match their fragments.
const std::unordered_set<std::string>& default_stop_words();

// Normalizes a raw stop-list entry ("Aren't" -> {aren, t}) through the
// tokenizer rules and inserts the resulting unigrams.
void add_stop_words(std::unordered_set<std::string>& out, std::string_view raw);

// Lowercase, split on non-alphanumeric, drop stop words, then form n-grams
// (joined with '_') over the surviving unigram sequence.
std::vector<std::string> tokenize(std::string_view text, const TokenizeConfig& cfg);

// Porter (1980) suffix stripping; applied per unigram when cfg.stem is set.
std::string porter_stem(const std::string& word);

// Concatenates each patient's notes with chart_offset_hours <= cutoff, in
// chart-offset order (ties keep input order). Patients whose notes all fall
// past the cutoff yield an empty document. Output order: first appearance.
std::vector<PatientDoc> aggregate_patient_docs(const std::vector<ClinicalNote>& notes,
                                               double cutoff_hours);

struct Vocabulary {
  std::vector<std::string> tokens;      // unique, sorted lexicographically
  std::vector<int> ngram_order;         // per token, 1..3
  std::vector<int> document_frequency;  // per token

  int size() const { return static_cast<int>(tokens.size()); }
  // -1 when absent.
  int index_of(const std::string& token) const;
  std::uint64_t content_hash() const;
};

struct VocabConfig {
  int min_df = 5;
  double max_df_fraction = 0.95;
};

// Tokens with document frequency in [min_df, max_df_fraction * n_docs].
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_docs,
                            const VocabConfig& cfg);

// Sparse row-major counts; entries strictly positive, sorted by (doc, token).
struct DocTermMatrix {
  int n_docs = 0;
  Vocabulary vocab;
  std::vector<std::size_t> row_ptr;  // size n_docs+1
  std::vector<int> col_idx;
  std::vector<int> count;
  std::vector<long> row_totals;  // m_i = sum_j c_ij over vocabulary columns

  std::size_t nnz() const { return col_idx.size(); }
  int count_at(int doc, int token) const;
  Eigen::VectorXd dense_row(int doc) const;
  Eigen::MatrixXd dense() const;
};

DocTermMatrix build_dtm(const std::vector<std::vector<std::string>>& token_docs,
                        const Vocabulary& vocab);

// 1 - cosine similarity; 1 when either row has no counts.
double cosine_distance(const DocTermMatrix& dtm, int row_i, int row_j);

// New matrix over the same vocabulary containing the given rows, in order.
DocTermMatrix subset_rows(const DocTermMatrix& dtm, const std::vector<int>& rows);

struct KeyTermMatrix {
  std::vector<std::string> terms;          // normalized term labels
  std::vector<std::string> missing_terms;  // requested but absent from vocab
  Eigen::MatrixXd values;                  // n_docs x n_terms
};

// Per-patient counts (presence indicators when presence=true) for each term.
// Terms are normalized through the tokenizer; multiword terms become n-grams.
// Absent terms produce an all-zero column and are reported in missing_terms.
KeyTermMatrix key_term_covariates(const DocTermMatrix& dtm,
                                  const std::vector<std::string>& terms,
                                  bool presence = false);

}  // namespace textcaus::corpus
