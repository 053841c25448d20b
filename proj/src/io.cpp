#include "textcaus/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "textcaus/common.hpp"

namespace textcaus::io {

namespace {

using nlohmann::json;

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("cannot open " + path);
  return f;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw data_error("cannot write " + path);
  return f;
}

void finish(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw data_error("write failed for " + path);
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace

double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw data_error("invalid number '" + s + "' in " + context);
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

std::vector<corpus::ClinicalNote> read_notes_jsonl(const std::string& path) {
  std::ifstream f = open_in(path);
  std::vector<corpus::ClinicalNote> notes;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw data_error(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    corpus::ClinicalNote note;
    try {
      note.patient_id = obj.at("patient_id").get<std::string>();
      note.category = corpus::note_category_from_string(obj.at("category").get<std::string>());
      note.chart_offset_hours = obj.at("chart_offset_hours").get<double>();
      note.text = obj.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw data_error(path + ":" + std::to_string(lineno) + ": bad note record: " + e.what());
    }
    notes.push_back(std::move(note));
  }
  return notes;
}

void write_notes_jsonl(const std::vector<corpus::ClinicalNote>& notes,
                       const std::string& path) {
  std::ofstream f = open_out(path);
  for (const auto& note : notes) {
    json obj{{"patient_id", note.patient_id},
             {"category", corpus::to_string(note.category)},
             {"chart_offset_hours", note.chart_offset_hours},
             {"text", note.text}};
    f << obj.dump() << "\n";
  }
  finish(f, path);
}

CovariateTable read_covariates_csv(const std::string& path,
                                   const std::map<std::string, ColumnKind>& kinds) {
  std::ifstream f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw data_error(path + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "patient_id")
    throw data_error(path + ": header must start with patient_id");

  CovariateTable table;
  table.names.assign(header.begin() + 1, header.end());
  const std::size_t p = table.names.size();
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != p + 1)
      throw data_error(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(p + 1) + " fields, got " + std::to_string(fields.size()));
    table.ids.push_back(fields[0]);
    std::vector<double> vals(p);
    for (std::size_t j = 0; j < p; ++j)
      vals[j] = fields[j + 1].empty()
                    ? kNaN
                    : parse_double(fields[j + 1], path + ":" + std::to_string(lineno));
    rows.push_back(std::move(vals));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < p; ++j) table.values(i, j) = rows[i][j];

  table.kinds.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    auto it = kinds.find(table.names[j]);
    if (it != kinds.end()) {
      table.kinds[j] = it->second;
      continue;
    }
    bool binary = true;
    bool any = false;
    for (std::size_t i = 0; i < rows.size() && binary; ++i) {
      const double v = table.values(i, j);
      if (std::isnan(v)) continue;
      any = true;
      if (v != 0.0 && v != 1.0) binary = false;
    }
    table.kinds[j] = (binary && any) ? ColumnKind::binary : ColumnKind::continuous;
  }
  table.validate();
  return table;
}

void write_covariates_csv(const CovariateTable& table, const std::string& path) {
  std::ofstream f = open_out(path);
  f << "patient_id";
  for (const auto& name : table.names) f << "," << csv_escape(name);
  f << "\n";
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    f << csv_escape(table.ids[i]);
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      f << ",";
      if (!table.is_missing(int(i), int(j))) f << format_double(table.values(i, j));
    }
    f << "\n";
  }
  finish(f, path);
}

void write_dtm(const corpus::DocTermMatrix& dtm, const std::string& dtm_path,
               const std::string& vocab_path) {
  {
    std::ofstream f = open_out(dtm_path);
    f << dtm.n_docs << " " << dtm.vocab.size() << " " << dtm.nnz() << "\n";
    for (int i = 0; i < dtm.n_docs; ++i)
      for (std::size_t e = dtm.row_ptr[i]; e < dtm.row_ptr[i + 1]; ++e)
        f << i << " " << dtm.col_idx[e] << " " << dtm.count[e] << "\n";
    finish(f, dtm_path);
  }
  {
    std::ofstream f = open_out(vocab_path);
    for (const auto& tok : dtm.vocab.tokens) f << tok << "\n";
    finish(f, vocab_path);
  }
}

corpus::DocTermMatrix read_dtm(const std::string& dtm_path, const std::string& vocab_path) {
  corpus::DocTermMatrix dtm;
  {
    std::ifstream f = open_in(vocab_path);
    std::string tok;
    while (std::getline(f, tok)) {
      if (!tok.empty() && tok.back() == '\r') tok.pop_back();
      if (tok.empty()) continue;
      dtm.vocab.tokens.push_back(tok);
    }
  }
  for (std::size_t j = 1; j < dtm.vocab.tokens.size(); ++j)
    if (!(dtm.vocab.tokens[j - 1] < dtm.vocab.tokens[j]))
      throw data_error(vocab_path + ": tokens must be unique and sorted");
  dtm.vocab.ngram_order.resize(dtm.vocab.tokens.size());
  for (std::size_t j = 0; j < dtm.vocab.tokens.size(); ++j)
    dtm.vocab.ngram_order[j] =
        1 + static_cast<int>(std::count(dtm.vocab.tokens[j].begin(),
                                        dtm.vocab.tokens[j].end(), '_'));

  std::ifstream f = open_in(dtm_path);
  std::size_t nnz = 0;
  int n_terms = 0;
  if (!(f >> dtm.n_docs >> n_terms >> nnz))
    throw data_error(dtm_path + ": malformed header");
  if (n_terms != dtm.vocab.size())
    throw data_error(dtm_path + ": vocabulary size mismatch with " + vocab_path);
  if (dtm.n_docs < 0) throw data_error(dtm_path + ": negative doc count");

  std::vector<std::vector<std::pair<int, int>>> rows(dtm.n_docs);
  for (std::size_t e = 0; e < nnz; ++e) {
    int doc = 0, term = 0, count = 0;
    if (!(f >> doc >> term >> count)) throw data_error(dtm_path + ": truncated triplets");
    if (doc < 0 || doc >= dtm.n_docs || term < 0 || term >= n_terms || count <= 0)
      throw data_error(dtm_path + ": invalid triplet " + std::to_string(doc) + " " +
                       std::to_string(term) + " " + std::to_string(count));
    rows[doc].push_back({term, count});
  }
  dtm.vocab.document_frequency.assign(n_terms, 0);
  dtm.row_ptr.push_back(0);
  for (int i = 0; i < dtm.n_docs; ++i) {
    auto& r = rows[i];
    std::sort(r.begin(), r.end());
    long total = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (k > 0 && r[k].first == r[k - 1].first)
        throw data_error(dtm_path + ": duplicate (doc, term) entry");
      dtm.col_idx.push_back(r[k].first);
      dtm.count.push_back(r[k].second);
      total += r[k].second;
      ++dtm.vocab.document_frequency[r[k].first];
    }
    dtm.row_ptr.push_back(dtm.col_idx.size());
    dtm.row_totals.push_back(total);
  }
  return dtm;
}

void write_matched_sample_csv(const match::MatchedSample& sample,
                              const std::vector<std::string>& ids,
                              const std::string& path) {
  if (static_cast<int>(ids.size()) != sample.n_units)
    throw data_error("write_matched_sample_csv: id count mismatch");
  std::ofstream f = open_out(path);
  f << "patient_id,set_id,role,weight,dropped\n";
  std::vector<char> role(sample.n_units, '?');
  for (const auto& set : sample.sets) {
    for (int u : set.treated) role[u] = 't';
    for (int u : set.controls) role[u] = 'c';
  }
  for (int u : sample.dropped_treated) role[u] = 't';
  for (int u : sample.dropped_control) role[u] = 'c';
  for (int u = 0; u < sample.n_units; ++u) {
    const bool dropped = sample.set_index[u] < 0;
    f << csv_escape(ids[u]) << "," << sample.set_index[u] << ","
      << (role[u] == 't' ? "treated" : "control") << ","
      << format_double(sample.weights(u)) << "," << (dropped ? 1 : 0) << "\n";
  }
  finish(f, path);
}

match::MatchedSample read_matched_sample_csv(const std::string& path,
                                             const std::vector<std::string>& expected_ids) {
  std::ifstream f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw data_error(path + ": empty file");
  if (split_csv_line(line) !=
      std::vector<std::string>{"patient_id", "set_id", "role", "weight", "dropped"})
    throw data_error(path + ": unexpected header");

  const int n = static_cast<int>(expected_ids.size());
  std::map<std::string, int> index;
  for (int i = 0; i < n; ++i) index[expected_ids[i]] = i;

  match::MatchedSample sample;
  sample.n_units = n;
  sample.weights = Eigen::VectorXd::Zero(n);
  sample.set_index.assign(n, -1);
  std::map<int, match::MatchedSet> sets;
  std::vector<char> seen(n, 0);
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != 5) throw data_error(where + ": expected 5 fields");
    auto it = index.find(fields[0]);
    if (it == index.end()) throw data_error(where + ": unknown patient_id " + fields[0]);
    const int u = it->second;
    if (seen[u]) throw data_error(where + ": duplicate patient_id " + fields[0]);
    seen[u] = 1;
    const int set_id = static_cast<int>(parse_double(fields[1], where));
    const bool treated = fields[2] == "treated";
    if (!treated && fields[2] != "control") throw data_error(where + ": bad role " + fields[2]);
    sample.weights(u) = parse_double(fields[3], where);
    sample.set_index[u] = set_id;
    if (set_id < 0) {
      (treated ? sample.dropped_treated : sample.dropped_control).push_back(u);
    } else {
      auto& set = sets[set_id];
      (treated ? set.treated : set.controls).push_back(u);
    }
  }
  for (int u = 0; u < n; ++u)
    if (!seen[u]) throw data_error(path + ": missing row for " + expected_ids[u]);
  int next = 0;
  for (auto& [set_id, set] : sets) {
    if (set_id != next++) throw data_error(path + ": set ids are not contiguous");
    std::sort(set.treated.begin(), set.treated.end());
    std::sort(set.controls.begin(), set.controls.end());
    sample.sets.push_back(std::move(set));
  }
  std::sort(sample.dropped_treated.begin(), sample.dropped_treated.end());
  std::sort(sample.dropped_control.begin(), sample.dropped_control.end());
  match::validate_matched_sample(sample);
  return sample;
}

void write_docs_jsonl(const std::vector<corpus::PatientDoc>& docs, const std::string& path) {
  std::ofstream f = open_out(path);
  for (const auto& doc : docs) {
    json obj{{"patient_id", doc.patient_id}, {"text", doc.text}};
    f << obj.dump() << "\n";
  }
  finish(f, path);
}

std::vector<corpus::PatientDoc> read_docs_jsonl(const std::string& path) {
  std::ifstream f = open_in(path);
  std::vector<corpus::PatientDoc> docs;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
      docs.push_back({obj.at("patient_id").get<std::string>(), obj.at("text").get<std::string>()});
    } catch (const json::exception& e) {
      throw data_error(path + ":" + std::to_string(lineno) + ": bad document record: " + e.what());
    }
  }
  return docs;
}

TreatmentOutcome read_treatment_csv(const std::string& path,
                                    const std::vector<std::string>& expected_ids) {
  std::ifstream f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw data_error(path + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  int z_col = -1, y_col = -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "z") z_col = static_cast<int>(j);
    if (header[j] == "y") y_col = static_cast<int>(j);
  }
  if (header.empty() || header[0] != "patient_id" || z_col < 0 || y_col < 0)
    throw data_error(path + ": header must contain patient_id, z, y");

  std::map<std::string, std::pair<int, int>> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) throw data_error(where + ": wrong field count");
    auto parse_bit = [&](const std::string& s) {
      double v = parse_double(s, where);
      if (v != 0 && v != 1) throw data_error(where + ": z and y must be 0 or 1");
      return static_cast<int>(v);
    };
    if (!rows.emplace(fields[0], std::make_pair(parse_bit(fields[z_col]), parse_bit(fields[y_col])))
             .second)
      throw data_error(where + ": duplicate patient_id " + fields[0]);
  }
  TreatmentOutcome out;
  for (const auto& id : expected_ids) {
    auto it = rows.find(id);
    if (it == rows.end()) throw data_error(path + ": no treatment/outcome row for " + id);
    out.z.push_back(it->second.first);
    out.y.push_back(it->second.second);
  }
  if (rows.size() != expected_ids.size()) {
    const std::set<std::string> known(expected_ids.begin(), expected_ids.end());
    for (const auto& [id, zy] : rows)
      if (!known.count(id))
        throw data_error(path + ": row for unknown patient_id " + id);
  }
  return out;
}

void write_treatment_csv(const std::vector<std::string>& ids, const std::vector<int>& z,
                         const std::vector<int>& y, const std::string& path) {
  if (ids.size() != z.size() || ids.size() != y.size())
    throw data_error("write_treatment_csv: length mismatch");
  std::ofstream f = open_out(path);
  f << "patient_id,z,y\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    f << csv_escape(ids[i]) << "," << z[i] << "," << y[i] << "\n";
  finish(f, path);
}

namespace {

struct MeanCi {
  double mean = kNaN;
  double lo = kNaN;
  double hi = kNaN;
};

MeanCi mean_ci(const std::vector<double>& vals) {
  std::vector<double> finite;
  for (double v : vals)
    if (std::isfinite(v)) finite.push_back(v);
  MeanCi out;
  if (finite.empty()) return out;
  double mean = 0;
  for (double v : finite) mean += v;
  mean /= double(finite.size());
  out.mean = mean;
  if (finite.size() == 1) {
    out.lo = out.hi = mean;
    return out;
  }
  double ss = 0;
  for (double v : finite) ss += (v - mean) * (v - mean);
  const double se = std::sqrt(ss / double(finite.size() - 1) / double(finite.size()));
  out.lo = mean - 1.96 * se;
  out.hi = mean + 1.96 * se;
  return out;
}

}  // namespace

void write_balance_csv(const std::vector<match::BalanceReport>& psm,
                       const std::vector<match::BalanceReport>& text,
                       const std::string& path) {
  if (psm.empty() || text.empty())
    throw data_error("write_balance_csv: need at least one report per approach");
  const std::size_t n_rows = psm[0].rows.size();
  for (const auto& r : psm)
    if (r.rows.size() != n_rows) throw data_error("write_balance_csv: row mismatch");
  for (const auto& r : text)
    if (r.rows.size() != n_rows) throw data_error("write_balance_csv: row mismatch");

  std::ofstream f = open_out(path);
  f << "covariate,kind,smd_before,smd_before_lo,smd_before_hi,"
       "smd_psm,smd_psm_lo,smd_psm_hi,smd_text,smd_text_lo,smd_text_hi\n";
  for (std::size_t r = 0; r < n_rows; ++r) {
    std::vector<double> before, after_psm, after_text;
    for (const auto& rep : psm) {
      before.push_back(rep.rows[r].smd_before);
      after_psm.push_back(rep.rows[r].smd_after);
    }
    for (const auto& rep : text) after_text.push_back(rep.rows[r].smd_after);
    const MeanCi b = mean_ci(before);
    const MeanCi mp = mean_ci(after_psm);
    const MeanCi mt = mean_ci(after_text);
    f << csv_escape(psm[0].rows[r].name) << "," << psm[0].rows[r].kind << ","
      << format_double(b.mean) << "," << format_double(b.lo) << "," << format_double(b.hi)
      << "," << format_double(mp.mean) << "," << format_double(mp.lo) << ","
      << format_double(mp.hi) << "," << format_double(mt.mean) << ","
      << format_double(mt.lo) << "," << format_double(mt.hi) << "\n";
  }
  finish(f, path);
}

void write_scan_csv(const std::vector<effects::SubgroupEffect>& scan,
                    const std::string& path) {
  std::vector<const effects::SubgroupEffect*> rows;
  for (const auto& eff : scan)
    if (eff.valid) rows.push_back(&eff);
  std::sort(rows.begin(), rows.end(),
            [](const effects::SubgroupEffect* a, const effects::SubgroupEffect* b) {
              if (a->shrunken_estimate != b->shrunken_estimate)
                return a->shrunken_estimate > b->shrunken_estimate;
              return a->label < b->label;
            });
  std::ofstream f = open_out(path);
  f << "rule,source,estimate,se,p_value,q_value,shrunken,discovered\n";
  for (const auto* eff : rows) {
    f << csv_escape(eff->label) << "," << effects::to_string(eff->source) << ","
      << format_double(eff->interaction_estimate) << "," << format_double(eff->se) << ","
      << format_double(eff->p_value) << "," << format_double(eff->q_value) << ","
      << format_double(eff->shrunken_estimate) << "," << (eff->discovered ? 1 : 0) << "\n";
  }
  finish(f, path);
}

Eigen::MatrixXd read_embeddings_csv(const std::string& path,
                                    const std::vector<std::string>& expected_ids) {
  std::ifstream f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw data_error(path + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  if (header.empty() || header[0] != "patient_id")
    throw data_error(path + ": header must start with patient_id");
  const std::size_t width = header.size() - 1;
  if (width == 0) throw data_error(path + ": no embedding columns");

  std::map<std::string, std::vector<double>> by_id;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != width + 1)
      throw data_error(path + ":" + std::to_string(lineno) + ": field count mismatch");
    std::vector<double> vals(width);
    for (std::size_t j = 0; j < width; ++j)
      vals[j] = parse_double(fields[j + 1], path + ":" + std::to_string(lineno));
    if (!by_id.emplace(fields[0], std::move(vals)).second)
      throw data_error(path + ": duplicate patient_id " + fields[0]);
  }
  Eigen::MatrixXd out(expected_ids.size(), width);
  for (std::size_t i = 0; i < expected_ids.size(); ++i) {
    auto it = by_id.find(expected_ids[i]);
    if (it == by_id.end())
      throw data_error(path + ": missing embedding row for patient " + expected_ids[i]);
    for (std::size_t j = 0; j < width; ++j) out(i, j) = it->second[j];
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f = open_in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_synth_dataset(const synth::SynthDataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_notes_jsonl(data.notes, (fs::path(dir) / "notes.jsonl").string());
  write_covariates_csv(data.covariates, (fs::path(dir) / "covariates.csv").string());
  write_covariates_csv(data.covariates_full, (fs::path(dir) / "covariates_full.csv").string());

  {
    std::ofstream f = open_out((fs::path(dir) / "treatment_outcome.csv").string());
    f << "patient_id,z,y,y0,y1\n";
    for (std::size_t i = 0; i < data.covariates.ids.size(); ++i)
      f << csv_escape(data.covariates.ids[i]) << "," << data.z[i] << "," << data.y[i]
        << "," << data.y0[i] << "," << data.y1[i] << "\n";
    finish(f, (fs::path(dir) / "treatment_outcome.csv").string());
  }

  json truth;
  truth["true_att"] = data.ground_truth.true_att;
  truth["sample_att"] = data.ground_truth.sample_att;
  truth["planted_token"] = data.ground_truth.planted_token;
  truth["planted_indicator"] = data.ground_truth.planted_indicator;
  truth["severity_tokens"] = data.ground_truth.severity_tokens;
  truth["confounder_tokens"] = data.ground_truth.confounder_tokens;
  std::ofstream f = open_out((fs::path(dir) / "ground_truth.json").string());
  f << truth.dump(2) << "\n";
  finish(f, (fs::path(dir) / "ground_truth.json").string());
}

}  // namespace textcaus::io
