#pragma once

#include "pointtrack/container.hpp"
#include "pointtrack/engines.hpp"

namespace pointtrack {

struct TrackFile {
    TrackResult<float> result;
    std::vector<Query> queries;
    nlohmann::json config;
};

inline void write_tracks(const std::string& path, const TrackResult<float>& result,
                         const std::vector<Query>& queries, nlohmann::json config = {}) {
    PTK_CHECK_SHAPE(result.tracks.dim(0) == static_cast<int64_t>(queries.size()),
                    "query count does not match track count");
    ContainerData c;
    c.kind = "tracks";
    c.meta["N"] = result.tracks.dim(0);
    c.meta["T"] = result.tracks.dim(1);
    auto& qj = c.meta["queries"] = nlohmann::json::array();
    for (const auto& q : queries) qj.push_back({q.t, q.x, q.y});
    c.meta["config"] = std::move(config);
    c.tensors.emplace_back("tracks", result.tracks);
    c.tensors.emplace_back("visibility_prob", result.visibility_prob);
    c.tensors.emplace_back("confidence_prob", result.confidence_prob);
    write_container(path, c);
}

inline TrackFile read_tracks(const std::string& path) {
    ContainerData c = read_container(path, "tracks");
    TrackFile f;
    f.result.tracks = c.tensor("tracks");
    f.result.visibility_prob = c.tensor("visibility_prob");
    f.result.confidence_prob = c.tensor("confidence_prob");
    for (const auto& q : c.meta.at("queries"))
        f.queries.push_back({q.at(0).get<int64_t>(), q.at(1).get<double>(), q.at(2).get<double>()});
    f.config = c.meta.value("config", nlohmann::json::object());
    return f;
}

}  // namespace pointtrack
