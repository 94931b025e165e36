/** Cluster review: pick the cluster holding the part of interest and name it. */

import { api, ApiError, ClustersPayload } from "./api";
import { banner, clear, el } from "./dom";
import { validateSelection } from "./state";

export function renderClustersView(root: HTMLElement): void {
  clear(root);
  const status = el("div", { class: "status" });
  const sceneList = el("div", { class: "scene-list" });
  const detail = el("div", { class: "detail" });
  root.append(status, sceneList, detail);

  const load = async () => {
    clear(status);
    clear(sceneList);
    try {
      const { scenes } = await api.listScenes();
      const withClusters = scenes.filter((s) => s.has_clusters);
      if (!withClusters.length) {
        status.append(banner("error", "no scene has cluster artifacts yet; run the parts stage"));
        return;
      }
      for (const scene of withClusters) {
        const button = el("button", { class: "scene" }, [
          `${scene.id} (${scene.frames} frames)`,
        ]);
        button.addEventListener("click", () => showScene(scene.id));
        sceneList.append(button);
      }
      void showScene(withClusters[0].id);
    } catch (err) {
      status.append(banner("error", describe(err), load));
    }
  };

  const showScene = async (sceneId: string) => {
    clear(detail);
    try {
      const payload = await api.getClusters(sceneId);
      detail.append(renderScene(payload, () => showScene(sceneId)));
    } catch (err) {
      detail.append(banner("error", describe(err), () => showScene(sceneId)));
    }
  };

  void load();
}

function renderScene(payload: ClustersPayload, reload: () => void): HTMLElement {
  const box = el("div", { class: "clusters" });
  const heading = payload.container_class
    ? `${payload.scene}: segments inside "${payload.container_class}" boxes`
    : payload.scene;
  box.append(el("h2", {}, [heading]));
  if (payload.selection) {
    box.append(
      el("p", { class: "current" }, [
        `current selection: cluster ${payload.selection.cluster} as "${payload.selection.part}"`,
      ])
    );
  }
  const partInput = el("input", {
    type: "text",
    placeholder: "part name, e.g. cabinet handle",
    value: payload.selection?.part ?? "",
  });
  box.append(el("div", { class: "part-name" }, [el("label", {}, ["part name: "]), partInput]));

  const grid = el("div", { class: "montages" });
  const note = el("div", { class: "status" });
  for (const cluster of payload.clusters) {
    const card = el("div", { class: "cluster-card" });
    card.append(
      el("img", { src: cluster.montage, alt: `cluster ${cluster.index}` }),
      el("div", {}, [`cluster ${cluster.index}: ${cluster.count} segments`])
    );
    const pick = el("button", {}, [`select cluster ${cluster.index}`]);
    pick.addEventListener("click", async () => {
      clear(note);
      try {
        const selection = validateSelection(cluster.index, partInput.value);
        const result = await api.postSelection(payload.scene, selection);
        note.append(
          banner(
            "ok",
            `saved: cluster ${result.cluster} as "${result.part}" ` +
              `(${result.mask_count} part masks on the next parts run)`
          )
        );
        reload();
      } catch (err) {
        note.append(banner("error", describe(err)));
      }
    });
    card.append(pick);
    grid.append(card);
  }
  box.append(grid, note);
  return box;
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0 ? `server offline: ${err.message}` : err.message;
  }
  return err instanceof Error ? err.message : String(err);
}
