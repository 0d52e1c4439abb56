#include "idbr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "idbr/error.hpp"

namespace idbr {

NspPair make_nsp_pair(const Example& canonical, int split_index,
                      int separator_token) {
  const auto& x = canonical.tokens;
  if (x.size() < 2) {
    throw std::invalid_argument(
        "make_nsp_pair: need at least two tokens to form a segment pair");
  }
  if (split_index <= 0 || split_index >= static_cast<int>(x.size())) {
    throw std::invalid_argument("make_nsp_pair: split index " +
                                std::to_string(split_index) +
                                " outside interior of sequence of length " +
                                std::to_string(x.size()));
  }

  const auto split = static_cast<size_t>(split_index);
  NspPair pair{canonical, canonical};

  auto& a = pair.is_next.tokens;
  a.clear();
  a.reserve(x.size() + 1);
  a.insert(a.end(), x.begin(), x.begin() + split);
  a.push_back(separator_token);
  a.insert(a.end(), x.begin() + split, x.end());
  pair.is_next.nsp_label = 0;
  pair.is_next.split_index = split_index;

  auto& b = pair.not_next.tokens;
  b.clear();
  b.reserve(x.size() + 1);
  b.insert(b.end(), x.begin() + split, x.end());
  b.push_back(separator_token);
  b.insert(b.end(), x.begin(), x.begin() + split);
  pair.not_next.nsp_label = 1;
  pair.not_next.split_index = split_index;

  return pair;
}

int sample_split_index(Rng& rng, size_t length) {
  if (length < 2) {
    throw std::invalid_argument(
        "sample_split_index: sequences shorter than two tokens have no "
        "interior position");
  }
  return 1 + static_cast<int>(rng.uniform_index(length - 1));
}

namespace {

// Pulls one CSV record (handles quoted fields spanning lines). Returns
// false on clean EOF. `line_number` tracks the record's first line.
bool read_record(std::istream& in, std::string& record, size_t& line_number,
                 size_t& next_line) {
  record.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  line_number = next_line++;
  while (true) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    record += line;
    // A record is complete when quotes balance.
    size_t quotes = std::count(record.begin(), record.end(), '"');
    if (quotes % 2 == 0) return true;
    if (!std::getline(in, line)) return true;  // unbalanced; caller reports
    ++next_line;
    record += '\n';
  }
}

struct CsvRow {
  std::string label;
  std::string text;
};

CsvRow parse_row(const std::string& record, const std::filesystem::path& path,
                 size_t line_number) {
  auto fail = [&](const std::string& what) -> CsvRow {
    throw ConfigError(path.string() + ":" + std::to_string(line_number) +
                      ": " + what);
  };

  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool label_done = false;
  for (size_t i = 0; i < record.size(); ++i) {
    const char c = record[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < record.size() && record[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',' && !label_done) {
      row.label = field;
      field.clear();
      label_done = true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) return fail("unterminated quoted field");
  if (!label_done) return fail("expected `label,text`, found one field");
  row.text = field;
  return row;
}

}  // namespace

std::vector<LabeledText> load_csv_dataset(const std::filesystem::path& path,
                                          int num_classes) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open dataset file: " + path.string());
  }

  std::string record;
  size_t line_number = 0;
  size_t next_line = 1;
  if (!read_record(in, record, line_number, next_line)) {
    throw ConfigError(path.string() + ": no examples (empty file)");
  }
  if (record != "label,text") {
    throw ConfigError(path.string() + ":1: expected header `label,text`, got `" +
                      record + "`");
  }

  std::vector<LabeledText> out;
  while (read_record(in, record, line_number, next_line)) {
    if (record.empty()) continue;
    const CsvRow row = parse_row(record, path, line_number);
    int label = 0;
    try {
      size_t pos = 0;
      label = std::stoi(row.label, &pos);
      if (pos != row.label.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(line_number) +
                        ": label is not an integer: `" + row.label + "`");
    }
    if (label < 1 || label > num_classes) {
      throw ConfigError(path.string() + ":" + std::to_string(line_number) +
                        ": label " + std::to_string(label) +
                        " outside declared range [1, " +
                        std::to_string(num_classes) + "]");
    }
    out.push_back(LabeledText{label - 1, row.text});
  }
  if (out.empty()) {
    throw ConfigError(path.string() + ": no examples");
  }
  return out;
}

SampledSplit subsample_split(std::span<const LabeledText> dataset,
                             int per_class_train, int per_class_val,
                             uint64_t seed) {
  if (per_class_train < 0 || per_class_val < 0) {
    throw std::invalid_argument("subsample_split: negative split size");
  }

  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < dataset.size(); ++i) {
    by_class[dataset[i].label].push_back(i);
  }

  const size_t need =
      static_cast<size_t>(per_class_train) + static_cast<size_t>(per_class_val);
  for (const auto& [cls, indices] : by_class) {
    if (indices.size() < need) {
      throw std::runtime_error(
          "subsample_split: class " + std::to_string(cls) + " has " +
          std::to_string(indices.size()) + " examples, needs " +
          std::to_string(need));
    }
  }

  SampledSplit split;
  Rng rng(seed);
  for (const auto& [cls, indices] : by_class) {
    const auto chosen = rng.sample_without_replacement(indices.size(), need);
    for (size_t i = 0; i < static_cast<size_t>(per_class_train); ++i) {
      split.train.push_back(dataset[indices[chosen[i]]]);
    }
    for (size_t i = per_class_train; i < need; ++i) {
      split.val.push_back(dataset[indices[chosen[i]]]);
    }
  }
  return split;
}

LabelSpace merge_label_space(std::span<const LabelSpaceEntry> tasks) {
  LabelSpace space;
  std::map<std::string, std::pair<int, int>> group_block;  // -> offset, size
  for (const LabelSpaceEntry& task : tasks) {
    const std::string group =
        task.merge_group.empty() ? "task:" + task.name : task.merge_group;
    auto it = group_block.find(group);
    if (it == group_block.end()) {
      group_block.emplace(group,
                          std::make_pair(space.total_classes, task.num_classes));
      space.offset_by_task[task.name] = space.total_classes;
      space.total_classes += task.num_classes;
    } else {
      if (it->second.second != task.num_classes) {
        throw ConfigError("merge group `" + group +
                          "` mixes class counts: " + task.name + " has " +
                          std::to_string(task.num_classes) + ", group block has " +
                          std::to_string(it->second.second));
      }
      space.offset_by_task[task.name] = it->second.first;
    }
  }
  return space;
}

}  // namespace idbr
