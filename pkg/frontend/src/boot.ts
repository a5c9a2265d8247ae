/** Browser entry point. */

import { bootstrap } from "./app.js";

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", () => void bootstrap(document));
} else {
  bootstrap(document);
}
