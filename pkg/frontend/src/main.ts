/** Browser entry point: mount the app against the serving origin. */

import { ApiClient } from "./api.js";
import { initApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  void initApp(root, new ApiClient(location.origin));
}
