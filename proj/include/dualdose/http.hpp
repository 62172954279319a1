#pragma once

// HTTP routes over TrialService (cpp-httplib).

#include <optional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dualdose/service.hpp"

namespace dualdose {

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
}

inline nlohmann::json request_json(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    return parse_json_text(req.body);
}

template <class F>
void handle(httplib::Response& res, int ok_status, F&& f) {
    try {
        send_json(res, ok_status, f());
    } catch (const ServiceError& e) {
        send_json(res, e.status(), e.body());
    } catch (const JsonInputError& e) {
        send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
}

inline std::optional<double> query_number(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    const std::string v = req.get_param_value(key);
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ServiceError(422, "invalid", std::string(key) + ": not a number", {{"field", key}});
    }
}

}  // namespace detail

inline void register_routes(httplib::Server& server, TrialService& service) {
    using detail::handle;
    using detail::request_json;

    server.Post("/trials", [&](const httplib::Request& req, httplib::Response& res) {
        handle(res, 201, [&] { return service.create(request_json(req)); });
    });
    server.Get(R"(/trials/([A-Za-z0-9_-]+))", [&](const httplib::Request& req, httplib::Response& res) {
        handle(res, 200, [&] { return service.get(req.matches[1]); });
    });
    server.Post(R"(/trials/([A-Za-z0-9_-]+)/patients)", [&](const httplib::Request& req, httplib::Response& res) {
        handle(res, 200, [&] { return service.add_patients(req.matches[1], request_json(req)); });
    });
    server.Patch(R"(/trials/([A-Za-z0-9_-]+)/patients/([A-Za-z0-9_.-]+))",
                 [&](const httplib::Request& req, httplib::Response& res) {
                     handle(res, 200, [&] { return service.patch_patient(req.matches[1], req.matches[2], request_json(req)); });
                 });
    server.Get(R"(/trials/([A-Za-z0-9_-]+)/recommendation)", [&](const httplib::Request& req, httplib::Response& res) {
        handle(res, 200, [&] { return service.recommendation(req.matches[1]); });
    });
    server.Post(R"(/trials/([A-Za-z0-9_-]+)/decisions)", [&](const httplib::Request& req, httplib::Response& res) {
        handle(res, 200, [&] { return service.commit(req.matches[1], request_json(req)); });
    });
    server.Get(R"(/trials/([A-Za-z0-9_-]+)/final)", [&](const httplib::Request& req, httplib::Response& res) {
        handle(res, 200, [&] { return service.final_selection(req.matches[1]); });
    });
    server.Post(R"(/trials/([A-Za-z0-9_-]+)/whatif)", [&](const httplib::Request& req, httplib::Response& res) {
        handle(res, 200, [&] { return service.whatif(req.matches[1], request_json(req)); });
    });
    server.Get("/designs/boin-dc/table", [&](const httplib::Request& req, httplib::Response& res) {
        handle(res, 200, [&] {
            std::optional<std::size_t> n;
            if (auto v = detail::query_number(req, "n")) {
                if (*v < 1 || *v != static_cast<double>(static_cast<std::size_t>(*v)))
                    throw ServiceError(422, "invalid", "n: expected a positive integer", {{"field", "n"}});
                n = static_cast<std::size_t>(*v);
            }
            return service.boundary_table(detail::query_number(req, "phiT"), detail::query_number(req, "phiR"), n);
        });
    });
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        detail::send_json(res, 200, {{"status", "ok"}});
    });
}

}  // namespace dualdose
