#pragma once

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <json.hpp>
#include <string>
#include <thread>

namespace ces {

// In-process stand-in for the MAX Image Caption Generator REST service.
// Serves POST /model/predict and can be scripted to misbehave for the
// wire-conformance tests (error status, garbage body, slow or flaky starts).
class MockMaxServer {
public:
    struct Behavior {
        std::string caption = "a man riding a wave on top of a surfboard";
        double probability = 0.68;
        int fail_first = 0;      // respond 500 to the first N requests
        int delay_ms = 0;        // sleep before answering
        bool error_status = false; // {"status":"error"} body
        bool garbage_body = false; // non-JSON body
        bool empty_predictions = false;
    };

    MockMaxServer() : MockMaxServer(Behavior()) {}

    explicit MockMaxServer(Behavior behavior) : behavior_(std::move(behavior)) {
        server_.Post("/model/predict", [this](const httplib::Request& req,
                                              httplib::Response& res) { handle(req, res); });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockMaxServer() {
        server_.stop();
        thread_.join();
    }

    int port() const { return port_; }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int requests() const { return requests_.load(); }
    bool saw_image_field() const { return saw_image_field_.load(); }
    size_t last_image_bytes() const { return last_image_bytes_.load(); }

private:
    void handle(const httplib::Request& req, httplib::Response& res) {
        const int n = ++requests_;
        if (req.has_file("image")) {
            saw_image_field_ = true;
            last_image_bytes_ = req.get_file_value("image").content.size();
        }
        if (behavior_.delay_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(behavior_.delay_ms));
        if (n <= behavior_.fail_first) {
            res.status = 500;
            res.set_content("temporarily down", "text/plain");
            return;
        }
        if (behavior_.garbage_body) {
            res.set_content("<html>not json</html>", "text/html");
            return;
        }
        nlohmann::json body;
        if (behavior_.error_status) {
            body["status"] = "error";
            body["message"] = "model failed to load";
        } else {
            body["status"] = "ok";
            body["predictions"] = nlohmann::json::array();
            if (!behavior_.empty_predictions) {
                body["predictions"].push_back(
                    {{"caption", behavior_.caption}, {"probability", behavior_.probability}});
                body["predictions"].push_back(
                    {{"caption", "a lower ranked caption"}, {"probability", 0.11}});
            }
        }
        res.set_content(body.dump(), "application/json");
    }

    Behavior behavior_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> requests_{0};
    std::atomic<bool> saw_image_field_{false};
    std::atomic<size_t> last_image_bytes_{0};
};

} // namespace ces
