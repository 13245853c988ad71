/** Transient error/notice messages, stacked bottom-right. */

export class Toaster {
  readonly el: HTMLElement;

  constructor(private readonly ttlMs = 4000) {
    this.el = document.createElement("div");
    this.el.className = "toasts";
  }

  show(message: string): void {
    const toast = document.createElement("div");
    toast.className = "toast";
    toast.setAttribute("role", "alert");
    toast.textContent = message;
    this.el.appendChild(toast);
    setTimeout(() => toast.remove(), this.ttlMs);
  }
}
