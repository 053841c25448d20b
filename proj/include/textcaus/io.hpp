#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "textcaus/corpus.hpp"
#include "textcaus/effects.hpp"
#include "textcaus/match.hpp"
#include "textcaus/synth.hpp"
#include "textcaus/table.hpp"

namespace textcaus::io {

// Notes: JSON Lines, one object per note with keys patient_id, category,
// chart_offset_hours, text.
std::vector<corpus::ClinicalNote> read_notes_jsonl(const std::string& path);
void write_notes_jsonl(const std::vector<corpus::ClinicalNote>& notes,
                       const std::string& path);

// Covariates: CSV with header, first column patient_id, empty fields are
// missing. Kinds default to binary when every observed value is 0/1;
// a sidecar map overrides per column.
CovariateTable read_covariates_csv(const std::string& path,
                                   const std::map<std::string, ColumnKind>& kinds = {});
void write_covariates_csv(const CovariateTable& table, const std::string& path);

// DTM: header line "n_docs n_terms nnz", then one "doc term count" triplet
// per line, 0-indexed; vocabulary sidecar holds one token per line.
void write_dtm(const corpus::DocTermMatrix& dtm, const std::string& dtm_path,
               const std::string& vocab_path);
corpus::DocTermMatrix read_dtm(const std::string& dtm_path,
                               const std::string& vocab_path);

// Aggregated per-patient documents: JSONL with patient_id and text.
void write_docs_jsonl(const std::vector<corpus::PatientDoc>& docs, const std::string& path);
std::vector<corpus::PatientDoc> read_docs_jsonl(const std::string& path);

// Treatment/outcome: CSV with columns patient_id, z, y (extra columns
// ignored), one row per patient; returned aligned to expected_ids.
struct TreatmentOutcome {
  std::vector<int> z;
  std::vector<int> y;
};
TreatmentOutcome read_treatment_csv(const std::string& path,
                                    const std::vector<std::string>& expected_ids);
void write_treatment_csv(const std::vector<std::string>& ids, const std::vector<int>& z,
                         const std::vector<int>& y, const std::string& path);

void write_matched_sample_csv(const match::MatchedSample& sample,
                              const std::vector<std::string>& ids,
                              const std::string& path);

// Rebuilds sets, weights, and drop lists from the CSV export. Pair
// distances are not stored in the file, so they come back empty.
match::MatchedSample read_matched_sample_csv(const std::string& path,
                                             const std::vector<std::string>& expected_ids);

// Fig-3-style export: per covariate, mean SMD across imputations with a
// normal 95% interval, for before/propensity/text columns.
void write_balance_csv(const std::vector<match::BalanceReport>& psm,
                       const std::vector<match::BalanceReport>& text,
                       const std::string& path);

// Fig-4-style export sorted by shrunken estimate, largest first.
void write_scan_csv(const std::vector<effects::SubgroupEffect>& scan,
                    const std::string& path);

// Embeddings: CSV, first column patient_id, remaining columns numeric.
Eigen::MatrixXd read_embeddings_csv(const std::string& path,
                                    const std::vector<std::string>& expected_ids);

std::vector<std::string> read_lines(const std::string& path);

void write_synth_dataset(const synth::SynthDataset& data, const std::string& dir);

std::string format_double(double v);

// CSV field splitter with double-quote support (single physical line).
std::vector<std::string> split_csv_line(const std::string& line);

// Strict numeric parse; `context` prefixes the error message.
double parse_double(const std::string& field, const std::string& context);

}  // namespace textcaus::io
