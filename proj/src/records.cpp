#include "agrav/records.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "agrav/errors.hpp"

namespace agrav {

namespace {

nlohmann::json triple_to_json(const IcdTriple& t) {
  return {{"min", t.min}, {"avg", t.avg}, {"max", t.max}};
}

IcdTriple triple_from_json(const nlohmann::json& j) {
  IcdTriple t;
  t.min = j.at("min").get<double>();
  t.avg = j.at("avg").get<double>();
  t.max = j.at("max").get<double>();
  return t;
}

}  // namespace

void write_records_jsonl(const std::filesystem::path& file,
                         const std::vector<IterationRecord>& records) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + file.string() + "' for writing");
  for (const IterationRecord& r : records) {
    nlohmann::json j{{"k", r.k},
                     {"acc", r.acc},
                     {"icc_head", r.icc_head},
                     {"icc_tail", r.icc_tail},
                     {"icd_head", triple_to_json(r.icd_head)},
                     {"icd_tail", triple_to_json(r.icd_tail)},
                     {"gamma", r.gamma.has_value()
                                   ? nlohmann::json(*r.gamma)
                                   : nlohmann::json(nullptr)},
                     {"checkpoint_path", r.checkpoint_path}};
    if (r.pgd_acc.has_value()) j["pgd_acc"] = *r.pgd_acc;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("write failed for '" + file.string() + "'");
}

std::vector<IterationRecord> read_records_jsonl(
    const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open '" + file.string() + "'");
  std::vector<IterationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError("'" + file.string() + "' line " +
                    std::to_string(line_no) + ": " + e.what());
    }
    IterationRecord r;
    r.k = j.at("k").get<Index>();
    r.acc = j.at("acc").get<double>();
    r.icc_head = j.at("icc_head").get<double>();
    r.icc_tail = j.at("icc_tail").get<double>();
    r.icd_head = triple_from_json(j.at("icd_head"));
    r.icd_tail = triple_from_json(j.at("icd_tail"));
    if (j.contains("gamma") && !j.at("gamma").is_null()) {
      r.gamma = j.at("gamma").get<double>();
    }
    r.checkpoint_path = j.at("checkpoint_path").get<std::string>();
    if (j.contains("pgd_acc") && !j.at("pgd_acc").is_null()) {
      r.pgd_acc = j.at("pgd_acc").get<double>();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace agrav
