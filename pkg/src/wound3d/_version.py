TOOL_VERSION = "0.1.0"
REPORT_SCHEMA_VERSION = "1.0.0"
