// Standalone mock of the MAX Image Caption Generator REST service, for
// exercising the HTTP captioner without the real model container.
#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <unistd.h>

#include "ces/mock_max_server.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mock MAX image-caption server"};
    ces::MockMaxServer::Behavior behavior;
    app.add_option("--caption", behavior.caption, "caption served for every image");
    app.add_option("--probability", behavior.probability, "reported probability");
    app.add_option("--fail-first", behavior.fail_first, "respond 500 to the first N requests");
    app.add_option("--delay-ms", behavior.delay_ms, "delay before answering");
    app.add_flag("--error-status", behavior.error_status, "serve {\"status\":\"error\"}");
    app.add_flag("--garbage-body", behavior.garbage_body, "serve a non-JSON body");
    CLI11_PARSE(app, argc, argv);

    ces::MockMaxServer server(behavior);
    std::cout << "listening on " << server.endpoint() << std::endl;
    // Runs until killed; the endpoint line above is machine-readable.
    pause();
    return 0;
}
