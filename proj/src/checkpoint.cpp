#include "hardmine/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "hardmine/json_io.hpp"

namespace hardmine {

namespace {

constexpr const char* kFormat = "hardmine-checkpoint";

} // namespace

std::uint64_t dataset_fingerprint(const Dataset& dataset) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Sample& s : dataset.samples()) {
        h = fnv1a64(s.sample_id, h);
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(s.features.data()),
                                     s.features.size() * sizeof(double)),
                    h);
    }
    return h;
}

void checkpoint_save(const ExperimentState& state, const Dataset& train, const std::filesystem::path& path) {
    const json doc{{"format", kFormat},
                   {"version", kCheckpointVersion},
                   {"config_hash", hex64(config_hash(state.config))},
                   {"dataset_fingerprint", hex64(dataset_fingerprint(train))},
                   {"state", state_to_json(state)}};
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("io_error", "cannot write checkpoint '" + tmp.string() + "'");
        }
        out << doc.dump() << '\n';
        if (!out) {
            throw Error("io_error", "failed writing checkpoint '" + tmp.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

ExperimentState checkpoint_load(const std::filesystem::path& path, const Dataset& train) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("io_error", "cannot open checkpoint '" + path.string() + "'");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("corrupt_checkpoint", "corrupt checkpoint '" + path.string() + "': " + e.what());
    }
    try {
        if (!doc.is_object() || doc.value("format", "") != kFormat) {
            throw Error("corrupt_checkpoint", "'" + path.string() + "' is not a checkpoint");
        }
        const int version = doc.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw Error("version_mismatch", "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
        }
        ExperimentState state = state_from_json(doc.at("state"));
        if (doc.at("config_hash").get<std::string>() != hex64(config_hash(state.config))) {
            throw Error("corrupt_checkpoint", "checkpoint config hash mismatch");
        }
        if (doc.at("dataset_fingerprint").get<std::string>() != hex64(dataset_fingerprint(train))) {
            throw Error("dataset_mismatch", "checkpoint was written for a different dataset");
        }
        return state;
    } catch (const json::exception& e) {
        throw Error("corrupt_checkpoint", "corrupt checkpoint '" + path.string() + "': " + e.what());
    } catch (const Error& e) {
        if (e.code() == "version_mismatch" || e.code() == "dataset_mismatch" || e.code() == "corrupt_checkpoint") {
            throw;
        }
        throw Error("corrupt_checkpoint", "corrupt checkpoint '" + path.string() + "': " + e.what());
    }
}

} // namespace hardmine
