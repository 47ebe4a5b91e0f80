// Runtime configuration: single source for the engine API base URL.
window.API_BASE = window.API_BASE || "http://127.0.0.1:8000";
