import { boot } from "./app";

// Backend origin: same origin by default, ?backend=… to point elsewhere
// during development.
const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("backend") ?? window.location.origin;

void boot(document, baseUrl);
