"""Terminal clients: ``flapu-admin`` drives a coordination server through its
HTTP interface, ``flapu-agent`` runs and administers a silo-side agent."""
