#pragma once

#include "regcl/dataset.hpp"
#include "regcl/harness.hpp"
#include "regcl/merging.hpp"
#include "regcl/model.hpp"
#include "regcl/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

// JSON file formats. Every document carries "format_version": 1; doubles are
// written in shortest round-trip form, so read(write(x)) reproduces x bitwise.
// Serialization is deterministic: object keys are sorted, arrays keep order.

namespace regcl::io {

inline constexpr int kFormatVersion = 1;

std::string gram_file_to_string(const GramMap& grams);
GramMap gram_file_from_string(const std::string& text);

std::string checkpoint_to_string(const Checkpoint& ck);
Checkpoint checkpoint_from_string(const std::string& text);

std::string merge_state_to_string(const MergeState& state);
MergeState merge_state_from_string(const std::string& text);

std::string dataset_to_string(const TaskDataset& ds);
TaskDataset dataset_from_string(const std::string& text);

std::string loss_history_to_string(const std::vector<LossRecord>& history);
std::vector<LossRecord> loss_history_from_string(const std::string& text);

std::string domain_spec_to_string(const DomainSpec& spec);
DomainSpec domain_spec_from_string(const std::string& text);

/// Results file. `config_echo` must be a JSON document (object) and is embedded verbatim.
struct ResultsFile {
    std::string strategy;
    std::uint64_t seed = 0;
    std::vector<std::string> task_ids;
    std::map<std::string, ResultMatrix> results;
    std::map<std::string, TransferMetrics> metrics;
    std::string config_echo = "{}";

    friend bool operator==(const ResultsFile&, const ResultsFile&) = default;
};

std::string results_to_string(const ResultsFile& results);
ResultsFile results_from_string(const std::string& text);

/// Everything needed to reproduce a sequence run.
struct RunConfig {
    std::vector<DomainSpec> sequence;
    SequenceConfig run;
    std::size_t n_train = 512;
    std::size_t n_test = 128;
    std::string output_dir = "out";

    void validate() const;
};

std::string run_config_to_string(const RunConfig& cfg);
/// Fields missing from the document keep their defaults; unknown keys are rejected.
RunConfig run_config_from_string(const std::string& text, RunConfig defaults = {});

std::string merge_config_to_string(const MergeConfig& cfg);

std::string read_text(const std::filesystem::path& path);
/// Writes atomically through a sibling temporary file.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace regcl::io
