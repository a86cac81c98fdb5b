import { ApiClient } from "./api";
import { render } from "./render";
import { ReviewStore } from "./state";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}

const store = new ReviewStore(new ApiClient());
store.subscribe(() => render(store, root));
void store.loadJobs().then(() => render(store, root));
